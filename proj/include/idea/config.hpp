#pragma once

#include "idea/types.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace idea {

/// Loss variants for ablations.
enum class Variant { full, no_LI, no_LE, no_LI_LE, no_LD };

Variant parse_variant(std::string_view name);
std::string_view variant_name(Variant v);

struct TrainConfig {
  Real alpha = 100;
  int num_domains = 10;
  int epochs = 300;
  int batch_size = 0;  // 0 = whole training split
  Real learning_rate = 1e-2;
  Real domain_learning_rate = 1e-3;
  Real weight_decay = 5e-4;
  Real dropout = 0.5;
  int hidden_dim = 64;
  int latent_dim = 32;
  int domain_hidden_dim = 32;
  Real scale_bias_init = -2;
  std::uint64_t seed = 0;
  int patience = 50;
  // Extra likelihood-only updates of the domain classifier after each model
  // step, keeping it fitted so the invariance gap stays a valid bound.
  int domain_classifier_steps = 5;
  Variant variant = Variant::full;
  // Training-time attack. Radii are fractions of the clean feature range.
  Real train_feature_eps = 0.01;
  int train_feature_steps = 3;
  Real train_edge_rate = 0.05;  // edits as a fraction of |E|
  int train_structure_candidates = 4;
};

struct EvalConfig {
  Real target_fraction = 0.2;
  Real eval_feature_eps = 0.01;  // fraction of the feature range
  int eval_feature_steps = 20;
  Real eval_edge_rate = 0.2;     // greedy flips as a fraction of |E|
  Real eval_inject_rate = 0.2;   // injected nodes as a fraction of |targets|
  int eval_inject_steps = 20;
  int edge_flip_shortlist = 8;
  std::string scenarios = "clean,feature_pgd,edge_flip,node_inject";
  std::string seeds = "0";
};

struct RunConfig {
  TrainConfig train;
  EvalConfig eval;

  /// Canonical `key = value` listing of every key.
  std::string to_text() const;
  /// FNV-1a of to_text(), as 16 hex digits.
  std::string hash() const;
};

/// Sets one key from its text value. Throws Error naming the key when it is
/// unknown or the value does not parse.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Flat `key = value` lines; `#` starts a comment; blank lines ignored.
RunConfig parse_config(std::string_view text, const std::string& source = "config");
RunConfig load_config(const std::filesystem::path& path);

/// Seeds listed one per line (or comma separated); duplicates are an error.
std::vector<std::uint64_t> parse_seed_list(std::string_view text);

}  // namespace idea
