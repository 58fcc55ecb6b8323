#pragma once

#include "idea/types.hpp"

#include <cstdint>
#include <random>
#include <string_view>

namespace idea {

/// Independent, reproducible generator for a named purpose under a run seed
/// (e.g. "split", "init", "attack", "domains").
std::mt19937_64 substream(std::uint64_t seed, std::string_view name);

/// Standard-normal matrix drawn row-major from `rng`.
Matrix standard_normal(Index rows, Index cols, std::mt19937_64& rng);

/// Fisher-Yates shuffle that does not depend on the library's std::shuffle.
template <typename T>
void shuffle(std::vector<T>& values, std::mt19937_64& rng) {
  for (std::size_t i = values.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(values[i - 1], values[pick(rng)]);
  }
}

}  // namespace idea
