#pragma once

#include "idea/graph.hpp"

#include <cstdint>

namespace idea {

/// Contextual stochastic block model with sparse binary "bag of words"
/// features: each class owns a block of topic features that fire more often.
struct CsbmOptions {
  Index num_nodes = 400;
  int num_classes = 4;
  Index num_features = 64;
  Real mean_degree = 4;
  Real homophily = 0.8;   // expected fraction of same-class neighbours
  Index topic_size = 8;   // topic features per class
  Real topic_prob = 0.3;
  Real background_prob = 0.03;
};

/// Draws a graph and returns its largest connected component.
Graph contextual_sbm(const CsbmOptions& options, std::uint64_t seed);

}  // namespace idea
