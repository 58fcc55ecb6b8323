#pragma once

#include "idea/types.hpp"

#include <cmath>
#include <compare>
#include <random>
#include <span>
#include <utility>

namespace idea {

/// Undirected edge stored once with first < second.
struct Edge {
  NodeId first = 0;
  NodeId second = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : first(std::min(a, b)), second(std::max(a, b)) {}

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct EdgeEdit {
  enum class Action { add, remove };
  Edge pair;
  Action action = Action::add;

  static EdgeEdit add(NodeId a, NodeId b) { return {Edge(a, b), Action::add}; }
  static EdgeEdit remove(NodeId a, NodeId b) { return {Edge(a, b), Action::remove}; }
  friend bool operator==(const EdgeEdit&, const EdgeEdit&) = default;
};

/// Attributed undirected graph. Immutable once built: every editing
/// operation returns a new graph.
class Graph {
 public:
  Graph() = default;
  /// Edges may arrive in any order; they are canonicalised and sorted.
  /// Throws on self-loops, duplicates, out-of-range endpoints, or a
  /// feature/label row count that disagrees with the node count.
  Graph(Matrix features, std::vector<Edge> edges, LabelVector labels, int num_classes);

  Index num_nodes() const { return features_.rows(); }
  Index num_features() const { return features_.cols(); }
  Index num_edges() const { return static_cast<Index>(edges_.size()); }
  int num_classes() const { return num_classes_; }

  const Matrix& features() const { return features_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const LabelVector& labels() const { return labels_; }
  int label(NodeId v) const { return labels_[v]; }

  bool has_edge(NodeId a, NodeId b) const;
  std::span<const NodeId> neighbors(NodeId v) const;
  Index degree(NodeId v) const { return offsets_[v + 1] - offsets_[v]; }
  bool contains(NodeId v) const { return v >= 0 && v < num_nodes(); }

  Graph with_features(Matrix features) const;
  /// Appends unlabeled nodes (label -1) carrying the given feature rows.
  Graph with_appended_nodes(const Matrix& new_features) const;

  friend bool operator==(const Graph& a, const Graph& b);

 private:
  void build_neighbor_index();

  Matrix features_;
  std::vector<Edge> edges_;
  LabelVector labels_;
  int num_classes_ = 0;
  std::vector<Index> offsets_{0};
  std::vector<NodeId> neighbor_ids_;
};

/// D^-1/2 (A + I) D^-1/2 over `num_nodes` nodes and a duplicate-free,
/// loop-free edge list; D is the degree matrix of A + I.
template <typename Scalar = Real>
Eigen::SparseMatrix<Scalar, Eigen::RowMajor> normalize_adjacency(Index num_nodes, std::span<const Edge> edges) {
  std::vector<Scalar> inv_sqrt_degree(static_cast<std::size_t>(num_nodes), Scalar(1));
  for (const Edge& e : edges) {
    inv_sqrt_degree[e.first] += 1;
    inv_sqrt_degree[e.second] += 1;
  }
  for (Scalar& d : inv_sqrt_degree) d = Scalar(1) / std::sqrt(d);
  std::vector<Eigen::Triplet<Scalar>> entries;
  entries.reserve(static_cast<std::size_t>(num_nodes) + 2 * edges.size());
  for (Index v = 0; v < num_nodes; ++v) {
    entries.emplace_back(v, v, inv_sqrt_degree[v] * inv_sqrt_degree[v]);
  }
  for (const Edge& e : edges) {
    const Scalar w = inv_sqrt_degree[e.first] * inv_sqrt_degree[e.second];
    entries.emplace_back(e.first, e.second, w);
    entries.emplace_back(e.second, e.first, w);
  }
  Eigen::SparseMatrix<Scalar, Eigen::RowMajor> adj(num_nodes, num_nodes);
  adj.setFromTriplets(entries.begin(), entries.end());
  return adj;
}

template <typename Scalar = Real>
Eigen::SparseMatrix<Scalar, Eigen::RowMajor> normalize_adjacency(const Graph& graph) {
  return normalize_adjacency<Scalar>(graph.num_nodes(), std::span<const Edge>(graph.edges()));
}

/// Induced subgraph on the largest connected component, re-indexed densely
/// in ascending original id. Ties go to the component holding the smallest
/// node id. `original_ids`, when given, receives new -> old ids.
Graph largest_connected_component(const Graph& graph, NodeList* original_ids = nullptr);

/// Uniform neighbour of `node`; an isolated node samples itself.
NodeId sample_neighbor(const Graph& graph, NodeId node, std::mt19937_64& rng);

/// Applies edits in order. Each edit is validated against the state left by
/// the preceding ones; the offending index is named in the error.
Graph apply_edge_edits(const Graph& graph, std::span<const EdgeEdit> edits);

/// Edits that turn `from` into `to` (same node count required).
std::vector<EdgeEdit> edge_difference(const Graph& from, const Graph& to);

}  // namespace idea
