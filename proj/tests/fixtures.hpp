#pragma once

#include "idea/data_io.hpp"
#include "idea/graph.hpp"
#include "idea/rng.hpp"
#include "idea/synthetic_graph.hpp"

#include <atomic>
#include <string>
#include <unistd.h>

namespace idea::test {

/// Graph with features drawn from `seed`, labels v % num_classes.
inline Graph make_graph(Index n, std::vector<Edge> edges, int num_classes = 2, Index dim = 3, std::uint64_t seed = 1) {
  auto rng = substream(seed, "fixture");
  LabelVector labels(n);
  for (Index v = 0; v < n; ++v) labels[v] = static_cast<int>(v % num_classes);
  return Graph(standard_normal(n, dim, rng), std::move(edges), labels, num_classes);
}

inline Graph path_graph(Index n, int num_classes = 2, Index dim = 3) {
  std::vector<Edge> edges;
  for (Index v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
  return make_graph(n, edges, num_classes, dim);
}

/// Small contextual SBM with a 1:1:8 split.
inline DatasetBundle small_bundle(Index n = 120, std::uint64_t seed = 3, Index features = 32, int classes = 3) {
  CsbmOptions o;
  o.num_nodes = n;
  o.num_classes = classes;
  o.num_features = features;
  DatasetBundle b{contextual_sbm(o, seed), {}, "csbm"};
  b.splits = make_split(b.graph, {0.1, 0.1, 0.8}, seed);
  return b;
}

/// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("idea_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

}  // namespace idea::test
