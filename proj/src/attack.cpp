#include "idea/attack.hpp"

#include "idea/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace idea {

namespace {

constexpr Real kNegInf = -std::numeric_limits<Real>::infinity();

Real sign(Real v) { return v > 0 ? Real(1) : (v < 0 ? Real(-1) : Real(0)); }

void require_nonempty(std::span<const NodeId> nodes, const char* what) {
  if (nodes.empty()) throw Error(std::string(what) + ": empty target set");
}

Json node_count_record(std::span<const NodeId> nodes) { return static_cast<Index>(nodes.size()); }

/// Labels extended with -1 for appended rows.
LabelVector extended_labels(const LabelVector& labels, Index rows) {
  LabelVector out = LabelVector::Constant(rows, -1);
  out.head(labels.size()) = labels;
  return out;
}

std::vector<Edge> flipped(const std::vector<Edge>& edges, const Edge& pair) {
  std::vector<Edge> out = edges;
  auto it = std::lower_bound(out.begin(), out.end(), pair);
  if (it != out.end() && *it == pair) {
    out.erase(it);
  } else {
    out.insert(it, pair);
  }
  return out;
}

}  // namespace

// --- Budget ------------------------------------------------------------------

void AttackBudget::validate() const {
  if (feature_eps < 0 || feature_steps < 0 || feature_step_size < 0 || edge_budget < 0 || inject_nodes < 0 ||
      inject_edges_per_node < 0 || structure_candidates < 1) {
    throw Error("attack budget fields must be nonnegative (and at least one structure candidate)");
  }
  if (feature_step_size > feature_eps) throw Error("feature_step_size exceeds feature_eps");
}

Real AttackBudget::step_size() const {
  if (feature_step_size > 0) return feature_step_size;
  if (feature_steps <= 0) return 0;
  return std::min(feature_eps, Real(2.5) * feature_eps / feature_steps);
}

Json AttackBudget::to_json() const {
  Json j;
  j["feature_eps"] = feature_eps;
  j["feature_steps"] = feature_steps;
  j["feature_step_size"] = step_size();
  j["edge_budget"] = edge_budget;
  j["inject_nodes"] = inject_nodes;
  j["inject_edges_per_node"] = inject_edges_per_node;
  j["structure_candidates"] = structure_candidates;
  return j;
}

AuditReport audit_perturbation(const Graph& source, const Graph& perturbed, const AttackBudget& budget) {
  AuditReport r;
  const Index n = source.num_nodes();
  auto fail = [&](std::string msg) {
    r.ok = false;
    r.violations.push_back(std::move(msg));
  };
  if (perturbed.num_nodes() < n || perturbed.num_features() != source.num_features()) {
    fail("perturbed graph drops nodes or changes the feature width");
    return r;
  }
  r.max_feature_change = (perturbed.features().topRows(n) - source.features()).cwiseAbs().maxCoeff();
  if (n == 0) r.max_feature_change = 0;
  // Relative slack for rounding in x + delta - x.
  const Real slack = 1e-12 * std::max<Real>(1, source.features().cwiseAbs().maxCoeff());
  if (r.max_feature_change > budget.feature_eps + slack) {
    fail("feature change " + format_real(r.max_feature_change) + " exceeds eps " + format_real(budget.feature_eps));
  }
  if (perturbed.labels().head(n) != source.labels()) fail("labels of original nodes changed");

  std::vector<Edge> inner;
  for (const Edge& e : perturbed.edges()) {
    if (e.second < n) {
      inner.push_back(e);
    } else {
      ++r.injected_edges;
    }
  }
  std::vector<Edge> diff;
  std::set_symmetric_difference(source.edges().begin(), source.edges().end(), inner.begin(), inner.end(),
                                std::back_inserter(diff));
  r.edge_edits = static_cast<Index>(diff.size());
  r.injected_nodes = perturbed.num_nodes() - n;
  if (r.edge_edits > budget.edge_budget) {
    fail(std::to_string(r.edge_edits) + " edge edits exceed budget " + std::to_string(budget.edge_budget));
  }
  if (r.injected_nodes > budget.inject_nodes) {
    fail(std::to_string(r.injected_nodes) + " injected nodes exceed budget " + std::to_string(budget.inject_nodes));
  }
  if (r.injected_edges > budget.inject_nodes * budget.inject_edges_per_node) {
    fail(std::to_string(r.injected_edges) + " injected edges exceed budget");
  }
  return r;
}

// --- Feature attacks ---------------------------------------------------------

Matrix feature_pgd(const NodeClassifier& model, const Graph& graph, const SparseMatrix& adj,
                   std::span<const NodeId> loss_nodes, std::span<const NodeId> perturb_rows,
                   const AttackBudget& budget, std::vector<Real>* loss_trace) {
  budget.validate();
  Matrix features = graph.features();
  if (budget.feature_steps == 0 || budget.feature_eps == 0 || perturb_rows.empty()) return features;
  const Real eps = budget.feature_eps;
  const Real step = budget.step_size();
  const Index rows = static_cast<Index>(perturb_rows.size());

  const Matrix base_projection = model.input_projection(features);
  Matrix delta = Matrix::Zero(rows, graph.num_features());
  Matrix projection = base_projection;
  Matrix d_projection;
  for (int s = 0; s < budget.feature_steps; ++s) {
    const Real loss = model.loss_projected(adj, projection, loss_nodes, graph.labels(), &d_projection, nullptr);
    if (loss_trace) loss_trace->push_back(loss);
    Matrix d_rows(rows, d_projection.cols());
    for (Index k = 0; k < rows; ++k) d_rows.row(k) = d_projection.row(perturb_rows[k]);
    const Matrix d_features = model.projection_to_features(d_rows);
    delta += step * d_features.unaryExpr([](Real v) { return sign(v); });
    delta = delta.cwiseMax(-eps).cwiseMin(eps);
    const Matrix delta_projection = model.input_projection(delta);
    for (Index k = 0; k < rows; ++k) {
      projection.row(perturb_rows[k]) = base_projection.row(perturb_rows[k]) + delta_projection.row(k);
    }
  }
  if (loss_trace) loss_trace->push_back(model.loss_projected(adj, projection, loss_nodes, graph.labels(), nullptr, nullptr));
  for (Index k = 0; k < rows; ++k) features.row(perturb_rows[k]) += delta.row(k);
  return features;
}

PerturbedGraph feature_attack_train(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                    std::span<const NodeId> subset, std::vector<Real>* loss_trace) {
  const SparseMatrix adj = normalize_adjacency(graph);
  PerturbedGraph out{graph.with_features(feature_pgd(model, graph, adj, subset, subset, budget, loss_trace))};
  out.provenance["attack"] = "feature_train";
  out.provenance["budget"] = budget.to_json();
  out.provenance["subset_size"] = node_count_record(subset);
  return out;
}

static std::set<NodeId> one_hop_closure(const Graph& graph, std::span<const NodeId> nodes) {
  std::set<NodeId> out(nodes.begin(), nodes.end());
  for (NodeId v : nodes) {
    for (NodeId u : graph.neighbors(v)) out.insert(u);
  }
  return out;
}

PerturbedGraph evasion_feature_pgd(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                   std::span<const NodeId> targets) {
  require_nonempty(targets, "evasion_feature_pgd");
  const std::set<NodeId> closure = one_hop_closure(graph, targets);
  const NodeList rows(closure.begin(), closure.end());
  const SparseMatrix adj = normalize_adjacency(graph);
  PerturbedGraph out{graph.with_features(feature_pgd(model, graph, adj, targets, rows, budget))};
  out.provenance["attack"] = "feature_pgd";
  out.provenance["budget"] = budget.to_json();
  out.provenance["targets"] = node_count_record(targets);
  return out;
}

// --- Structure attacks -------------------------------------------------------

std::vector<std::vector<EdgeEdit>> sample_structure_candidates(const Graph& graph, const AttackBudget& budget,
                                                               std::span<const NodeId> subset, std::mt19937_64& rng) {
  budget.validate();
  std::vector<std::vector<EdgeEdit>> candidates(static_cast<std::size_t>(budget.structure_candidates));
  const Index n = graph.num_nodes();
  if (budget.edge_budget == 0 || subset.empty() || n < 2) return candidates;
  std::uniform_int_distribution<std::size_t> pick_subset(0, subset.size() - 1);
  std::uniform_int_distribution<NodeId> pick_node(0, n - 1);
  std::uniform_real_distribution<Real> coin(0, 1);
  for (auto& edits : candidates) {
    std::set<Edge> used;
    const Index max_attempts = 20 * budget.edge_budget;
    for (Index attempt = 0; attempt < max_attempts && static_cast<Index>(edits.size()) < budget.edge_budget;
         ++attempt) {
      const NodeId u = subset[pick_subset(rng)];
      const auto nbrs = graph.neighbors(u);
      const bool remove = coin(rng) < 0.5 && !nbrs.empty();
      NodeId v;
      if (remove) {
        std::uniform_int_distribution<std::size_t> pick_nbr(0, nbrs.size() - 1);
        v = nbrs[pick_nbr(rng)];
      } else {
        v = pick_node(rng);
        if (v == u || graph.has_edge(u, v)) continue;
      }
      if (!used.insert(Edge(u, v)).second) continue;
      edits.push_back(remove ? EdgeEdit::remove(u, v) : EdgeEdit::add(u, v));
    }
  }
  return candidates;
}

PerturbedGraph structure_attack_train(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                      std::span<const NodeId> subset, std::mt19937_64& rng) {
  const auto candidates = sample_structure_candidates(graph, budget, subset, rng);
  PerturbedGraph out{graph};
  out.provenance["attack"] = "structure_train";
  out.provenance["budget"] = budget.to_json();
  if (budget.edge_budget == 0 || subset.empty()) return out;

  const Matrix projection = model.input_projection(graph.features());
  Real best_loss = kNegInf;
  std::size_t best = 0;
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const Graph edited = apply_edge_edits(graph, candidates[c]);
    const Real loss =
        model.loss_projected(normalize_adjacency(edited), projection, subset, graph.labels(), nullptr, nullptr);
    if (loss > best_loss) {
      best_loss = loss;
      best = c;
      out.graph = edited;
    }
  }
  out.provenance["candidate"] = best;
  out.provenance["loss"] = best_loss;
  return out;
}

Matrix edge_flip_scores(const SparseMatrix& adj, const AdjacencyGradient& grad, std::span<const NodeId> targets) {
  const Index n = adj.rows();
  const Index t = static_cast<Index>(targets.size());
  // Every row stores its self-loop, so the row length is the degree of A + I.
  Vector degree(n);
  for (Index v = 0; v < n; ++v) {
    degree[v] = static_cast<Real>(adj.outerIndexPtr()[v + 1] - adj.outerIndexPtr()[v]);
  }

  // Sensitivity to each node's (self-loop augmented) degree.
  Vector d_degree = Vector::Zero(n);
  for (Index k = 0; k < n; ++k) {
    Real sum = 0;
    for (SparseMatrix::InnerIterator it(adj, k); it; ++it) {
      sum += (grad.entry(k, it.col()) + grad.entry(it.col(), k)) * it.value();
    }
    d_degree[k] = -sum / (2 * degree[k]);
  }

  Matrix g_rows = Matrix::Zero(t, n);  // G(target, v)
  Matrix g_cols = Matrix::Zero(t, n);  // G(v, target)
  for (std::size_t l = 0; l < grad.left.size(); ++l) {
    Matrix left_t(t, grad.left[l].cols());
    Matrix right_t(t, grad.right[l].cols());
    for (Index a = 0; a < t; ++a) {
      left_t.row(a) = grad.left[l].row(targets[a]);
      right_t.row(a) = grad.right[l].row(targets[a]);
    }
    g_rows.noalias() += left_t * grad.right[l].transpose();
    g_cols.noalias() += right_t * grad.left[l].transpose();
  }

  const Vector inv_sqrt_degree = degree.cwiseSqrt().cwiseInverse();
  Matrix scores(t, n);
  for (Index a = 0; a < t; ++a) {
    const NodeId i = targets[a];
    for (Index j = 0; j < n; ++j) {
      if (j == i) {
        scores(a, j) = kNegInf;
        continue;
      }
      const Real direction = adj.coeff(i, j) != 0 ? Real(-1) : Real(1);
      const Real direct = (g_rows(a, j) + g_cols(a, j)) * inv_sqrt_degree[i] * inv_sqrt_degree[j];
      scores(a, j) = direction * (direct + d_degree[i] + d_degree[j]);
    }
  }
  return scores;
}

PerturbedGraph evasion_edge_flip_greedy(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                        std::span<const NodeId> targets, int shortlist) {
  require_nonempty(targets, "evasion_edge_flip_greedy");
  budget.validate();
  if (shortlist < 1) throw Error("edge flip shortlist must be positive");
  const Index n = graph.num_nodes();
  const Matrix projection = model.input_projection(graph.features());
  std::vector<Edge> edges = graph.edges();
  std::set<Edge> touched;
  std::vector<EdgeEdit> edits;
  std::vector<char> is_target(static_cast<std::size_t>(n), 0);
  for (NodeId t : targets) is_target[t] = 1;
  auto loss_of = [&](const std::vector<Edge>& e, AdjacencyGradient* grad) {
    return model.loss_projected(normalize_adjacency(n, std::span<const Edge>(e)), projection, targets, graph.labels(),
                                nullptr, grad);
  };
  Real current = loss_of(edges, nullptr);
  for (Index round = 0; round < budget.edge_budget; ++round) {
    AdjacencyGradient grad;
    loss_of(edges, &grad);
    const SparseMatrix adj = normalize_adjacency(n, std::span<const Edge>(edges));
    const Matrix scores = edge_flip_scores(adj, grad, targets);

    // Top `shortlist` distinct untouched pairs by linearised gain, kept
    // sorted by (gain desc, pair asc). A pair of two targets is seen from the
    // smaller endpoint only.
    std::vector<std::pair<Real, Edge>> ranked;
    auto better = [](const std::pair<Real, Edge>& x, const std::pair<Real, Edge>& y) {
      return x.first != y.first ? x.first > y.first : x.second < y.second;
    };
    for (Index a = 0; a < scores.rows(); ++a) {
      const NodeId t = targets[a];
      for (Index j = 0; j < n; ++j) {
        const Real s = scores(a, j);
        if (s == kNegInf || (is_target[j] && j < t)) continue;
        const std::pair<Real, Edge> entry(s, Edge(t, j));
        if (static_cast<int>(ranked.size()) == shortlist && !better(entry, ranked.back())) continue;
        if (touched.count(entry.second)) continue;
        ranked.insert(std::upper_bound(ranked.begin(), ranked.end(), entry, better), entry);
        if (static_cast<int>(ranked.size()) > shortlist) ranked.pop_back();
      }
    }
    if (ranked.empty()) break;

    Real best_loss = current;
    const Edge* best = nullptr;
    for (const auto& [score, pair] : ranked) {
      const Real loss = loss_of(flipped(edges, pair), nullptr);
      if (loss > best_loss) {
        best_loss = loss;
        best = &pair;
      }
    }
    if (!best) break;
    const bool present = std::binary_search(edges.begin(), edges.end(), *best);
    edits.push_back(present ? EdgeEdit{*best, EdgeEdit::Action::remove} : EdgeEdit{*best, EdgeEdit::Action::add});
    touched.insert(*best);
    edges = flipped(edges, *best);
    current = best_loss;
  }
  PerturbedGraph out{apply_edge_edits(graph, edits)};
  out.provenance["attack"] = "edge_flip";
  out.provenance["budget"] = budget.to_json();
  out.provenance["targets"] = node_count_record(targets);
  out.provenance["flips"] = static_cast<Index>(edits.size());
  return out;
}

// --- Injection ---------------------------------------------------------------

namespace {

/// Targets ordered by how many injected nodes already attach to them, so
/// every target is covered before any gets a second injected neighbour.
std::vector<NodeId> pick_attachments(std::span<const NodeId> targets, const std::vector<int>& attached,
                                     const Vector& preference, Index count) {
  std::vector<Index> order(targets.size());
  for (std::size_t a = 0; a < order.size(); ++a) order[a] = static_cast<Index>(a);
  std::stable_sort(order.begin(), order.end(), [&](Index x, Index y) {
    if (attached[x] != attached[y]) return attached[x] < attached[y];
    return preference[x] > preference[y];
  });
  std::vector<NodeId> out;
  for (Index k = 0; k < count && k < static_cast<Index>(order.size()); ++k) out.push_back(order[k]);
  return out;
}

Matrix copied_rows(const Graph& graph, Index count, std::mt19937_64& rng) {
  std::uniform_int_distribution<NodeId> pick(0, graph.num_nodes() - 1);
  Matrix rows(count, graph.num_features());
  for (Index r = 0; r < count; ++r) rows.row(r) = graph.features().row(pick(rng));
  return rows;
}

std::vector<Edge> injected_edge_set(const Graph& graph, const std::vector<std::vector<NodeId>>& wiring) {
  std::vector<Edge> edges = graph.edges();
  const Index n = graph.num_nodes();
  for (std::size_t j = 0; j < wiring.size(); ++j) {
    for (NodeId t : wiring[j]) edges.emplace_back(n + static_cast<NodeId>(j), t);
  }
  std::sort(edges.begin(), edges.end());
  return edges;
}

PerturbedGraph build_injected(const Graph& graph, const Matrix& injected, const std::vector<Edge>& edges) {
  Matrix features(graph.num_nodes() + injected.rows(), graph.num_features());
  features << graph.features(), injected;
  return {Graph(std::move(features), edges, extended_labels(graph.labels(), graph.num_nodes() + injected.rows()),
                graph.num_classes())};
}

}  // namespace

PerturbedGraph node_injection_attack(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                     std::span<const NodeId> targets, std::mt19937_64& rng) {
  budget.validate();
  if (budget.inject_nodes == 0) {
    PerturbedGraph out{graph};
    out.provenance["attack"] = "node_inject";
    out.provenance["budget"] = budget.to_json();
    return out;
  }
  require_nonempty(targets, "node_injection_attack");
  const Index n = graph.num_nodes();
  const Index m = budget.inject_nodes;
  const Index total = n + m;
  const Index per_node = std::min<Index>(budget.inject_edges_per_node, static_cast<Index>(targets.size()));
  const Real lo = graph.features().minCoeff();
  const Real hi = graph.features().maxCoeff();
  const LabelVector labels = extended_labels(graph.labels(), total);

  Matrix injected = copied_rows(graph, m, rng);
  const Matrix base_projection = model.input_projection(graph.features());
  auto full_projection = [&](const Matrix& inj) {
    Matrix p(total, base_projection.cols());
    p << base_projection, model.input_projection(inj);
    return p;
  };

  // Wiring: one injected node at a time, by linearised gain of the new edge.
  std::vector<std::vector<NodeId>> wiring(static_cast<std::size_t>(m));
  std::vector<int> attached(targets.size(), 0);
  const Matrix projection = full_projection(injected);
  for (Index j = 0; j < m; ++j) {
    const std::vector<Edge> edges = injected_edge_set(graph, wiring);
    const SparseMatrix adj = normalize_adjacency(total, std::span<const Edge>(edges));
    AdjacencyGradient grad;
    model.loss_projected(adj, projection, targets, labels, nullptr, &grad);
    const NodeId self = n + j;
    const Matrix scores = edge_flip_scores(adj, grad, std::span<const NodeId>(&self, 1));
    Vector preference(static_cast<Index>(targets.size()));
    for (std::size_t a = 0; a < targets.size(); ++a) preference[a] = scores(0, targets[a]);
    for (NodeId a : pick_attachments(targets, attached, preference, per_node)) {
      wiring[j].push_back(targets[a]);
      ++attached[a];
    }
  }

  // Feature PGD on the injected rows inside the clean feature range.
  const std::vector<Edge> edges = injected_edge_set(graph, wiring);
  const SparseMatrix adj = normalize_adjacency(total, std::span<const Edge>(edges));
  const Real step = budget.feature_steps > 0 ? std::min<Real>(hi - lo, 2.5 * (hi - lo) / budget.feature_steps) : 0;
  Matrix d_projection;
  for (int s = 0; s < budget.feature_steps; ++s) {
    model.loss_projected(adj, full_projection(injected), targets, labels, &d_projection, nullptr);
    const Matrix d_injected = model.projection_to_features(d_projection.bottomRows(m));
    injected += step * d_injected.unaryExpr([](Real v) { return sign(v); });
    injected = injected.cwiseMax(lo).cwiseMin(hi);
  }

  PerturbedGraph out = build_injected(graph, injected, edges);
  out.provenance["attack"] = "node_inject";
  out.provenance["budget"] = budget.to_json();
  out.provenance["targets"] = node_count_record(targets);
  return out;
}

PerturbedGraph random_injection(const Graph& graph, const AttackBudget& budget, std::span<const NodeId> targets,
                                std::mt19937_64& rng) {
  budget.validate();
  const Index m = budget.inject_nodes;
  if (m == 0) return {graph};
  require_nonempty(targets, "random_injection");
  const Index per_node = std::min<Index>(budget.inject_edges_per_node, static_cast<Index>(targets.size()));
  const Matrix injected = copied_rows(graph, m, rng);
  std::uniform_real_distribution<Real> uniform(0, 1);
  std::vector<std::vector<NodeId>> wiring(static_cast<std::size_t>(m));
  std::vector<int> attached(targets.size(), 0);
  for (Index j = 0; j < m; ++j) {
    Vector preference(static_cast<Index>(targets.size()));
    for (Index a = 0; a < preference.size(); ++a) preference[a] = uniform(rng);
    for (NodeId a : pick_attachments(targets, attached, preference, per_node)) {
      wiring[j].push_back(targets[a]);
      ++attached[a];
    }
  }
  PerturbedGraph out = build_injected(graph, injected, injected_edge_set(graph, wiring));
  out.provenance["attack"] = "random_inject";
  out.provenance["budget"] = budget.to_json();
  return out;
}

// --- Poisoning ---------------------------------------------------------------

PerturbedGraph random_poison(const Graph& graph, Real flip_rate, std::mt19937_64& rng) {
  if (!(flip_rate >= 0 && flip_rate <= 1)) throw Error("flip rate must lie in [0, 1]");
  const Index n = graph.num_nodes();
  const Index count = static_cast<Index>(std::floor(flip_rate * static_cast<Real>(graph.num_edges()) + 1e-9));
  std::vector<Edge> removable = graph.edges();
  shuffle(removable, rng);
  std::size_t next_removal = 0;
  std::set<Edge> added;
  std::vector<EdgeEdit> edits;
  std::uniform_real_distribution<Real> coin(0, 1);
  std::uniform_int_distribution<NodeId> pick(0, std::max<Index>(n - 1, 0));
  const Real max_pairs = static_cast<Real>(n) * static_cast<Real>(n - 1) / 2;
  for (Index k = 0; k < count; ++k) {
    const bool want_remove = coin(rng) < 0.5;
    const bool can_add = static_cast<Real>(graph.num_edges() + static_cast<Index>(added.size())) < max_pairs;
    if ((want_remove || !can_add) && next_removal < removable.size()) {
      const Edge e = removable[next_removal++];
      edits.push_back({e, EdgeEdit::Action::remove});
      continue;
    }
    if (!can_add) break;
    for (;;) {
      const NodeId u = pick(rng), v = pick(rng);
      if (u == v || graph.has_edge(u, v)) continue;
      if (!added.insert(Edge(u, v)).second) continue;
      edits.push_back(EdgeEdit::add(u, v));
      break;
    }
  }
  PerturbedGraph out{apply_edge_edits(graph, edits)};
  out.provenance["attack"] = "random_poison";
  out.provenance["flip_rate"] = flip_rate;
  out.provenance["flips"] = static_cast<Index>(edits.size());
  return out;
}

}  // namespace idea
