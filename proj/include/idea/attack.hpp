#pragma once

#include "idea/data_io.hpp"
#include "idea/graph.hpp"
#include "idea/nn.hpp"

#include <random>

namespace idea {

struct AttackBudget {
  Real feature_eps = 0;        // L-inf radius per feature entry
  int feature_steps = 0;
  Real feature_step_size = 0;  // 0 picks min(eps, 2.5 * eps / steps)
  Index edge_budget = 0;       // max edge edits
  Index inject_nodes = 0;
  Index inject_edges_per_node = 0;
  int structure_candidates = 4;  // random edit sets scored by the training structure attack

  /// Throws on negative fields or a step size above the radius.
  void validate() const;
  Real step_size() const;
  Json to_json() const;
};

struct PerturbedGraph {
  Graph graph;
  Json provenance = Json::object();
};

struct AuditReport {
  bool ok = true;
  std::vector<std::string> violations;
  Real max_feature_change = 0;
  Index edge_edits = 0;
  Index injected_nodes = 0;
  Index injected_edges = 0;
};

/// Checks a perturbed graph against its source: feature changes on original
/// nodes within feature_eps, edits among original nodes within edge_budget,
/// injected nodes and their edges within the injection budget.
AuditReport audit_perturbation(const Graph& source, const Graph& perturbed, const AttackBudget& budget);

/// Sign-gradient ascent on the mean cross-entropy of `subset`, perturbing
/// only the rows in `perturb_rows`, projected to the L-inf ball after every
/// step. `loss_trace`, when given, receives the loss before each step and
/// after the last.
Matrix feature_pgd(const NodeClassifier& model, const Graph& graph, const SparseMatrix& adj,
                   std::span<const NodeId> loss_nodes, std::span<const NodeId> perturb_rows,
                   const AttackBudget& budget, std::vector<Real>* loss_trace = nullptr);

/// Training-time feature attack on the training nodes.
PerturbedGraph feature_attack_train(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                    std::span<const NodeId> subset, std::vector<Real>* loss_trace = nullptr);

/// Random edit sets of at most edge_budget edits, each touching `subset`.
std::vector<std::vector<EdgeEdit>> sample_structure_candidates(const Graph& graph, const AttackBudget& budget,
                                                               std::span<const NodeId> subset, std::mt19937_64& rng);

/// Scores structure_candidates random edit sets by the loss on `subset` and
/// keeps the worst one (first on ties).
PerturbedGraph structure_attack_train(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                      std::span<const NodeId> subset, std::mt19937_64& rng);

/// Feature PGD restricted to targets and their 1-hop neighbours.
PerturbedGraph evasion_feature_pgd(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                   std::span<const NodeId> targets);

/// Linearised gain of flipping each pair (t, v), t in targets, from the
/// adjacency gradient; rows follow `targets`, columns all nodes. Pairs that
/// cannot be flipped (v == t) hold -inf.
Matrix edge_flip_scores(const SparseMatrix& adj, const AdjacencyGradient& grad, std::span<const NodeId> targets);

/// Greedy flips incident to targets. Each round ranks pairs by the
/// linearised gain, evaluates the exact loss of the best `shortlist`, and
/// applies the best one if it raises the loss. Every pair flips at most once.
PerturbedGraph evasion_edge_flip_greedy(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                        std::span<const NodeId> targets, int shortlist = 8);

/// Appends inject_nodes nodes, each wired to inject_edges_per_node targets by
/// gradient score, then runs feature_steps of PGD on their features inside
/// the clean feature range.
PerturbedGraph node_injection_attack(const NodeClassifier& model, const Graph& graph, const AttackBudget& budget,
                                     std::span<const NodeId> targets, std::mt19937_64& rng);

/// Same budget as node_injection_attack with random wiring and features
/// copied from random existing nodes.
PerturbedGraph random_injection(const Graph& graph, const AttackBudget& budget, std::span<const NodeId> targets,
                                std::mt19937_64& rng);

/// Flips floor(rate * |E|) distinct random pairs, each an add or a remove
/// with probability 1/2.
PerturbedGraph random_poison(const Graph& graph, Real flip_rate, std::mt19937_64& rng);

}  // namespace idea
