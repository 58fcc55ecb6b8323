#include "idea/graph.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <queue>
#include <sstream>

namespace idea {

namespace {

std::string describe(const Edge& e) {
  std::ostringstream out;
  out << "{" << e.first << "," << e.second << "}";
  return out.str();
}

}  // namespace

Graph::Graph(Matrix features, std::vector<Edge> edges, LabelVector labels, int num_classes)
    : features_(std::move(features)),
      edges_(std::move(edges)),
      labels_(std::move(labels)),
      num_classes_(num_classes) {
  const Index n = features_.rows();
  if (labels_.size() != n) {
    throw Error("graph: " + std::to_string(labels_.size()) + " labels for " + std::to_string(n) +
                " nodes");
  }
  if (num_classes_ < 0) throw Error("graph: negative class count");
  for (Index v = 0; v < n; ++v) {
    if (labels_[v] < -1 || labels_[v] >= num_classes_) {
      throw Error("graph: label " + std::to_string(labels_[v]) + " of node " + std::to_string(v) +
                  " outside [-1, " + std::to_string(num_classes_) + ")");
    }
  }
  for (Edge& e : edges_) {
    e = Edge(e.first, e.second);
    if (e.first < 0 || e.second >= n) throw Error("graph: edge " + describe(e) + " out of range");
    if (e.first == e.second) throw Error("graph: self-loop at node " + std::to_string(e.first));
  }
  std::sort(edges_.begin(), edges_.end());
  const auto dup = std::adjacent_find(edges_.begin(), edges_.end());
  if (dup != edges_.end()) throw Error("graph: duplicate edge " + describe(*dup));
  build_neighbor_index();
}

void Graph::build_neighbor_index() {
  const Index n = num_nodes();
  std::vector<Index> count(static_cast<std::size_t>(n), 0);
  for (const Edge& e : edges_) {
    ++count[e.first];
    ++count[e.second];
  }
  offsets_.assign(static_cast<std::size_t>(n + 1), 0);
  for (Index v = 0; v < n; ++v) offsets_[v + 1] = offsets_[v] + count[v];
  neighbor_ids_.assign(static_cast<std::size_t>(offsets_[n]), 0);
  std::vector<Index> cursor(offsets_.begin(), offsets_.end() - 1);
  // Edges are sorted, so each neighbour list comes out sorted as well.
  for (const Edge& e : edges_) neighbor_ids_[cursor[e.first]++] = e.second;
  for (const Edge& e : edges_) neighbor_ids_[cursor[e.second]++] = e.first;
  for (Index v = 0; v < n; ++v) {
    std::sort(neighbor_ids_.begin() + offsets_[v], neighbor_ids_.begin() + offsets_[v + 1]);
  }
}

bool Graph::has_edge(NodeId a, NodeId b) const {
  if (a == b) return false;
  return std::binary_search(edges_.begin(), edges_.end(), Edge(a, b));
}

std::span<const NodeId> Graph::neighbors(NodeId v) const {
  if (!contains(v)) throw Error("graph: node " + std::to_string(v) + " out of range");
  return {neighbor_ids_.data() + offsets_[v], static_cast<std::size_t>(degree(v))};
}

Graph Graph::with_features(Matrix features) const {
  if (features.rows() != num_nodes()) throw Error("graph: feature rows do not match node count");
  Graph copy = *this;
  copy.features_ = std::move(features);
  return copy;
}

Graph Graph::with_appended_nodes(const Matrix& new_features) const {
  if (new_features.rows() > 0 && new_features.cols() != num_features()) {
    throw Error("graph: appended features have wrong width");
  }
  Matrix features(num_nodes() + new_features.rows(), num_features());
  features << features_, new_features;
  LabelVector labels = LabelVector::Constant(features.rows(), -1);
  labels.head(num_nodes()) = labels_;
  return Graph(std::move(features), edges_, std::move(labels), num_classes_);
}

bool operator==(const Graph& a, const Graph& b) {
  return a.num_classes_ == b.num_classes_ && a.edges_ == b.edges_ &&
         a.features_.rows() == b.features_.rows() && a.features_.cols() == b.features_.cols() &&
         a.features_ == b.features_ && a.labels_ == b.labels_;
}

Graph largest_connected_component(const Graph& graph, NodeList* original_ids) {
  const Index n = graph.num_nodes();
  std::vector<Index> component(static_cast<std::size_t>(n), -1);
  Index best = -1;
  Index best_size = 0;
  Index next = 0;
  for (NodeId start = 0; start < n; ++start) {
    if (component[start] >= 0) continue;
    Index size = 0;
    std::queue<NodeId> frontier;
    frontier.push(start);
    component[start] = next;
    while (!frontier.empty()) {
      const NodeId v = frontier.front();
      frontier.pop();
      ++size;
      for (NodeId u : graph.neighbors(v)) {
        if (component[u] < 0) {
          component[u] = next;
          frontier.push(u);
        }
      }
    }
    // Components are discovered in order of their smallest id, so a strict
    // comparison keeps the earliest one on ties.
    if (size > best_size) {
      best_size = size;
      best = next;
    }
    ++next;
  }

  NodeList kept;
  std::vector<NodeId> new_id(static_cast<std::size_t>(n), -1);
  for (NodeId v = 0; v < n; ++v) {
    if (component[v] == best) {
      new_id[v] = static_cast<NodeId>(kept.size());
      kept.push_back(v);
    }
  }
  const Index m = static_cast<Index>(kept.size());
  Matrix features(m, graph.num_features());
  LabelVector labels(m);
  for (Index i = 0; i < m; ++i) {
    features.row(i) = graph.features().row(kept[i]);
    labels[i] = graph.label(kept[i]);
  }
  std::vector<Edge> edges;
  for (const Edge& e : graph.edges()) {
    if (component[e.first] == best) edges.emplace_back(new_id[e.first], new_id[e.second]);
  }
  if (original_ids) *original_ids = kept;
  return Graph(std::move(features), std::move(edges), std::move(labels), graph.num_classes());
}

NodeId sample_neighbor(const Graph& graph, NodeId node, std::mt19937_64& rng) {
  const auto nbrs = graph.neighbors(node);
  if (nbrs.empty()) return node;
  std::uniform_int_distribution<std::size_t> pick(0, nbrs.size() - 1);
  return nbrs[pick(rng)];
}

Graph apply_edge_edits(const Graph& graph, std::span<const EdgeEdit> edits) {
  if (edits.empty()) return graph;
  std::map<Edge, bool> touched;  // pair -> present after the edits applied so far
  for (std::size_t i = 0; i < edits.size(); ++i) {
    const Edge& e = edits[i].pair;
    const std::string where = "edge edit " + std::to_string(i) + " " + describe(e);
    if (!graph.contains(e.first) || !graph.contains(e.second)) throw Error(where + ": node out of range");
    if (e.first == e.second) throw Error(where + ": self-loop");
    const auto it = touched.find(e);
    const bool is_present = it != touched.end() ? it->second : graph.has_edge(e.first, e.second);
    const bool adding = edits[i].action == EdgeEdit::Action::add;
    if (adding && is_present) throw Error(where + ": add of existing edge");
    if (!adding && !is_present) throw Error(where + ": remove of absent edge");
    touched[e] = adding;
  }

  std::vector<Edge> edges;
  edges.reserve(graph.edges().size() + touched.size());
  for (const Edge& e : graph.edges()) {
    const auto it = touched.find(e);
    if (it == touched.end() || it->second) edges.push_back(e);
  }
  for (const auto& [e, present] : touched) {
    if (present && !graph.has_edge(e.first, e.second)) edges.push_back(e);
  }
  return Graph(graph.features(), std::move(edges), graph.labels(), graph.num_classes());
}

std::vector<EdgeEdit> edge_difference(const Graph& from, const Graph& to) {
  if (from.num_nodes() != to.num_nodes()) throw Error("edge_difference: node counts differ");
  std::vector<EdgeEdit> edits;
  std::vector<Edge> only_from;
  std::vector<Edge> only_to;
  std::set_difference(from.edges().begin(), from.edges().end(), to.edges().begin(), to.edges().end(),
                      std::back_inserter(only_from));
  std::set_difference(to.edges().begin(), to.edges().end(), from.edges().begin(), from.edges().end(),
                      std::back_inserter(only_to));
  for (const Edge& e : only_from) edits.push_back({e, EdgeEdit::Action::remove});
  for (const Edge& e : only_to) edits.push_back({e, EdgeEdit::Action::add});
  return edits;
}

}  // namespace idea
