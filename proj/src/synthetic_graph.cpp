#include "idea/synthetic_graph.hpp"

#include "idea/rng.hpp"

namespace idea {

Graph contextual_sbm(const CsbmOptions& o, std::uint64_t seed) {
  if (o.num_nodes < 2 || o.num_classes < 2 || o.num_features < 1) throw Error("csbm: degenerate size");
  auto rng = substream(seed, "csbm");
  std::uniform_real_distribution<Real> uniform(0, 1);
  const Index n = o.num_nodes;
  LabelVector labels(n);
  for (Index v = 0; v < n; ++v) labels[v] = static_cast<int>(v % o.num_classes);
  std::vector<int> order(labels.data(), labels.data() + n);
  shuffle(order, rng);
  for (Index v = 0; v < n; ++v) labels[v] = order[v];

  const Real block = static_cast<Real>(n) / o.num_classes;
  const Real p_in = std::min<Real>(1, o.mean_degree * o.homophily / std::max<Real>(block - 1, 1));
  const Real p_out = std::min<Real>(1, o.mean_degree * (1 - o.homophily) / std::max<Real>(n - block, 1));
  std::vector<Edge> edges;
  for (Index a = 0; a < n; ++a) {
    for (Index b = a + 1; b < n; ++b) {
      if (uniform(rng) < (labels[a] == labels[b] ? p_in : p_out)) edges.emplace_back(a, b);
    }
  }

  Matrix features = Matrix::Zero(n, o.num_features);
  for (Index v = 0; v < n; ++v) {
    const Index start = (labels[v] * o.topic_size) % o.num_features;
    for (Index j = 0; j < o.num_features; ++j) {
      const Index offset = (j - start + o.num_features) % o.num_features;
      const Real p = offset < o.topic_size ? o.topic_prob : o.background_prob;
      features(v, j) = uniform(rng) < p ? 1 : 0;
    }
  }
  return largest_connected_component(Graph(std::move(features), std::move(edges), labels, o.num_classes));
}

}  // namespace idea
