#include "fixtures.hpp"

#include "idea/attack.hpp"
#include "idea/trainer.hpp"

#include <doctest.h>

#include <set>

using namespace idea;
using idea::test::make_graph;
using idea::test::small_bundle;

namespace {

GcnModel random_gcn(Index input_dim, Index classes, std::uint64_t seed) {
  auto rng = substream(seed, "init");
  return GcnModel::initialize(input_dim, 8, classes, rng);
}

Graph toy6() { return make_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {0, 3}}, 2, 4, 6); }

/// GCN trained on a small contextual SBM; shared by the tests that need a
/// model better than chance.
struct Trained {
  DatasetBundle data = small_bundle(150, 4, 24, 3);
  GcnModel model;
  Trained() {
    TrainConfig c;
    c.epochs = 150;
    c.hidden_dim = 16;
    c.seed = 4;
    model = fit_gcn(data, c);
  }
};

const Trained& trained() {
  static const Trained t;
  return t;
}

Real target_accuracy(const NodeClassifier& m, const Graph& g, std::span<const NodeId> targets) {
  return accuracy(m, g, targets);
}

NodeList first_test_nodes(const DatasetBundle& d, std::size_t k) {
  return NodeList(d.splits.test.begin(), d.splits.test.begin() + static_cast<std::ptrdiff_t>(k));
}

}  // namespace

TEST_CASE("budget validation") {
  AttackBudget b;
  b.feature_eps = 0.1;
  b.feature_steps = 4;
  CHECK(b.step_size() == doctest::Approx(0.0625));
  b.feature_step_size = 0.2;
  CHECK_THROWS_AS(b.validate(), Error);
  AttackBudget neg;
  neg.edge_budget = -1;
  CHECK_THROWS_AS(neg.validate(), Error);
}

TEST_CASE("feature attack with an empty ball or no steps is the identity") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 1);
  const GcnClassifier c(m);
  const NodeList subset{0, 2, 4};
  AttackBudget b;
  b.feature_steps = 3;
  CHECK(feature_attack_train(c, g, b, subset).graph == g);
  b.feature_eps = 0.1;
  b.feature_steps = 0;
  CHECK(feature_attack_train(c, g, b, subset).graph == g);
}

TEST_CASE("feature attack on a constant model leaves features unchanged") {
  const Graph g = toy6();
  const GcnModel zero{{Linear::zeros(4, 8), Linear::zeros(8, 2)}};
  AttackBudget b;
  b.feature_eps = 0.5;
  b.feature_steps = 3;
  CHECK(feature_attack_train(GcnClassifier(zero), g, b, NodeList{0, 1, 2}).graph.features() == g.features());
}

TEST_CASE("feature attack loss is non-decreasing across steps on a 5-node toy") {
  // A large hidden bias keeps every ReLU active, so the loss is convex in the
  // features and each projected sign step cannot lower it.
  const Graph g = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}}, 2, 3, 8);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    GcnModel m = random_gcn(3, 2, seed);
    m.trunk.conv1.bias.setConstant(10);
    AttackBudget b;
    b.feature_eps = 0.05;
    b.feature_steps = 3;
    std::vector<Real> trace;
    const PerturbedGraph out = feature_attack_train(GcnClassifier(m), g, b, NodeList{0, 1, 2, 3, 4}, &trace);
    REQUIRE(trace.size() == 4);
    for (std::size_t s = 1; s < trace.size(); ++s) CHECK(trace[s] >= trace[s - 1] - 1e-12);
    CHECK((out.graph.features() - g.features()).cwiseAbs().maxCoeff() <= 0.05 + 1e-15);
  }
}

TEST_CASE("feature attack only moves the requested rows") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 2);
  AttackBudget b;
  b.feature_eps = 0.3;
  b.feature_steps = 5;
  const PerturbedGraph out = feature_attack_train(GcnClassifier(m), g, b, NodeList{1, 4});
  for (NodeId v : {0, 2, 3, 5}) CHECK(out.graph.features().row(v) == g.features().row(v));
  CHECK(out.graph.edges() == g.edges());
}

TEST_CASE("structure attack with no edge budget is the identity") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 3);
  AttackBudget b;
  auto rng = substream(0, "attack");
  CHECK(structure_attack_train(GcnClassifier(m), g, b, NodeList{0, 1}, rng).graph == g);
}

TEST_CASE("structure attack with one candidate returns it") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 3);
  AttackBudget b;
  b.edge_budget = 2;
  b.structure_candidates = 1;
  auto a = substream(1, "attack");
  auto replay = substream(1, "attack");
  const auto candidates = sample_structure_candidates(g, b, NodeList{0, 1, 2}, replay);
  CHECK(structure_attack_train(GcnClassifier(m), g, b, NodeList{0, 1, 2}, a).graph ==
        apply_edge_edits(g, candidates[0]));
}

TEST_CASE("structure attack keeps the worst of eight candidates") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 4);
  const GcnClassifier c(m);
  const NodeList subset{0, 2, 5};
  AttackBudget b;
  b.edge_budget = 2;
  b.structure_candidates = 8;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto a = substream(seed, "attack");
    auto replay = substream(seed, "attack");
    const PerturbedGraph out = structure_attack_train(c, g, b, subset, a);
    Real best = -1;
    for (const auto& edits : sample_structure_candidates(g, b, subset, replay)) {
      CHECK(static_cast<Index>(edits.size()) <= b.edge_budget);
      const Graph e = apply_edge_edits(g, edits);
      best = std::max(best, c.loss(normalize_adjacency(e), e.features(), subset, g.labels()));
    }
    CHECK(c.loss(normalize_adjacency(out.graph), g.features(), subset, g.labels()) == doctest::Approx(best));
  }
}

TEST_CASE("evasion feature attack is local and inert at zero radius") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 5);
  const GcnClassifier c(m);
  AttackBudget b;
  b.feature_steps = 5;
  const NodeList target{0};
  CHECK(evasion_feature_pgd(c, g, b, target).graph.features() == g.features());

  b.feature_eps = 0.4;
  const PerturbedGraph out = evasion_feature_pgd(c, g, b, target);
  // Node 0 touches 1 and 3; the rest must be bit-identical.
  for (NodeId v : {2, 4, 5}) CHECK(out.graph.features().row(v) == g.features().row(v));
  CHECK((out.graph.features() - g.features()).cwiseAbs().maxCoeff() <= 0.4 + 1e-15);
  CHECK_THROWS_AS(evasion_feature_pgd(c, g, b, NodeList{}), Error);
}

TEST_CASE("evasion feature attack does not raise target accuracy of a trained model") {
  const Trained& t = trained();
  const GcnClassifier c(t.model);
  const NodeList targets = first_test_nodes(t.data, 30);
  AttackBudget b;
  b.feature_eps = 0.5;
  b.feature_steps = 20;
  const PerturbedGraph out = evasion_feature_pgd(c, t.data.graph, b, targets);
  const Real before = target_accuracy(c, t.data.graph, targets);
  const Real after = target_accuracy(c, out.graph, targets);
  CHECK(before > 0.5);
  CHECK(after <= before);
}

TEST_CASE("edge flip scores exclude self pairs") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 6);
  const SparseMatrix adj = normalize_adjacency(g);
  AdjacencyGradient grad;
  GcnClassifier(m).loss(adj, g.features(), NodeList{1, 3}, g.labels(), nullptr, &grad);
  const Matrix s = edge_flip_scores(adj, grad, NodeList{1, 3});
  CHECK(s.rows() == 2);
  CHECK(s.cols() == 6);
  CHECK(std::isinf(s(0, 1)));
  CHECK(std::isinf(s(1, 3)));
  CHECK(std::isfinite(s(0, 0)));
}

TEST_CASE("greedy edge flip with zero budget is the identity") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 7);
  AttackBudget b;
  CHECK(evasion_edge_flip_greedy(GcnClassifier(m), g, b, NodeList{0}).graph == g);
}

TEST_CASE("one greedy flip on a 4-node graph is the best single flip") {
  const Graph g = make_graph(4, {{0, 1}, {1, 2}, {2, 3}}, 2, 3, 9);
  int improving = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const GcnModel m = random_gcn(3, 2, 100 + seed);
    const GcnClassifier c(m);
    const NodeList target{1};
    auto loss_of = [&](const Graph& h) { return c.loss(normalize_adjacency(h), h.features(), target, g.labels()); };
    const Real clean = loss_of(g);
    Real best = clean;
    for (NodeId v : {0, 2, 3}) {
      const EdgeEdit e = g.has_edge(1, v) ? EdgeEdit::remove(1, v) : EdgeEdit::add(1, v);
      best = std::max(best, loss_of(apply_edge_edits(g, std::vector<EdgeEdit>{e})));
    }
    AttackBudget b;
    b.edge_budget = 1;
    const PerturbedGraph out = evasion_edge_flip_greedy(c, g, b, target);
    CHECK(loss_of(out.graph) == doctest::Approx(best).epsilon(1e-12));
    CHECK(edge_difference(g, out.graph).size() <= 1);
    if (best > clean) ++improving;
  }
  CHECK(improving > 0);
}

TEST_CASE("greedy edge flips touch targets and cap at the available pairs") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 8);
  AttackBudget b;
  b.edge_budget = 100;
  const NodeList targets{2};
  const PerturbedGraph out = evasion_edge_flip_greedy(GcnClassifier(m), g, b, targets);
  const auto edits = edge_difference(g, out.graph);
  CHECK(edits.size() <= 5);
  for (const EdgeEdit& e : edits) CHECK((e.pair.first == 2 || e.pair.second == 2));
}

TEST_CASE("node injection with no nodes is the identity") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 9);
  AttackBudget b;
  auto rng = substream(0, "attack");
  CHECK(node_injection_attack(GcnClassifier(m), g, b, NodeList{0}, rng).graph == g);
}

TEST_CASE("node injection matches its budget and keeps original nodes") {
  const Graph g = toy6();
  const GcnModel m = random_gcn(4, 2, 10);
  AttackBudget b;
  b.inject_nodes = 3;
  b.inject_edges_per_node = 2;
  b.feature_steps = 5;
  auto rng = substream(1, "attack");
  const NodeList targets{0, 2, 5};
  const PerturbedGraph out = node_injection_attack(GcnClassifier(m), g, b, targets, rng);
  CHECK(out.graph.num_nodes() == 9);
  CHECK(out.graph.num_edges() == g.num_edges() + 6);
  CHECK(out.graph.features().topRows(6) == g.features());
  for (Index v = 6; v < 9; ++v) {
    CHECK(out.graph.label(v) == -1);
    CHECK(out.graph.degree(v) == 2);
    for (NodeId u : out.graph.neighbors(v)) CHECK(std::find(targets.begin(), targets.end(), u) != targets.end());
  }
  CHECK(out.graph.features().bottomRows(3).maxCoeff() <= g.features().maxCoeff());
  CHECK(out.graph.features().bottomRows(3).minCoeff() >= g.features().minCoeff());
  const AuditReport audit = audit_perturbation(g, out.graph, b);
  CHECK(audit.ok);
  CHECK(audit.injected_nodes == 3);
  CHECK(audit.injected_edges == 6);
}

TEST_CASE("gradient-guided injection hurts a trained model at least as much as random injection") {
  const Trained& t = trained();
  const GcnClassifier c(t.model);
  const NodeList targets = first_test_nodes(t.data, 30);
  AttackBudget b;
  b.inject_nodes = 6;
  b.inject_edges_per_node = 5;
  b.feature_steps = 20;
  auto rng = substream(2, "attack");
  auto random_rng = substream(2, "attack");
  const Real guided = target_accuracy(c, node_injection_attack(c, t.data.graph, b, targets, rng).graph, targets);
  const Real random = target_accuracy(c, random_injection(t.data.graph, b, targets, random_rng).graph, targets);
  CHECK(guided <= random);
}

TEST_CASE("random poison") {
  const Graph g = make_graph(30, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {5, 6}, {7, 8}, {9, 10}, {11, 12}, {13, 14}, {15, 16}});
  auto a = substream(3, "attack");
  CHECK(random_poison(g, 0, a).graph == g);
  auto b1 = substream(4, "attack");
  auto b2 = substream(4, "attack");
  const PerturbedGraph x = random_poison(g, 0.5, b1);
  const PerturbedGraph y = random_poison(g, 0.5, b2);
  CHECK(x.graph == y.graph);
  CHECK(edge_difference(g, x.graph).size() == 5);
  CHECK(x.graph.features() == g.features());
  CHECK_THROWS_AS(random_poison(g, 1.5, a), Error);
}

TEST_CASE("the auditor accepts every attack's output and rejects overruns") {
  const Trained& t = trained();
  const Graph& g = t.data.graph;
  const GcnClassifier c(t.model);
  const NodeList targets = first_test_nodes(t.data, 10);
  AttackBudget b;
  b.feature_eps = 0.2;
  b.feature_steps = 4;
  b.edge_budget = 6;
  b.inject_nodes = 2;
  b.inject_edges_per_node = 3;
  auto rng = substream(5, "attack");
  const Graph copy = g;
  for (const PerturbedGraph& out :
       {feature_attack_train(c, g, b, t.data.splits.train), structure_attack_train(c, g, b, t.data.splits.train, rng),
        evasion_feature_pgd(c, g, b, targets), evasion_edge_flip_greedy(c, g, b, targets),
        node_injection_attack(c, g, b, targets, rng), random_injection(g, b, targets, rng)}) {
    const AuditReport r = audit_perturbation(g, out.graph, b);
    CHECK(r.ok);
    CHECK(r.violations.empty());
  }
  CHECK(g == copy);
  CHECK(g.features() == copy.features());

  AttackBudget tight = b;
  tight.feature_eps = 0.01;
  tight.edge_budget = 1;
  tight.inject_nodes = 1;
  CHECK_FALSE(audit_perturbation(g, evasion_feature_pgd(c, g, b, targets).graph, tight).ok);
  CHECK_FALSE(audit_perturbation(g, evasion_edge_flip_greedy(c, g, b, targets).graph, tight).ok);
  CHECK_FALSE(audit_perturbation(g, node_injection_attack(c, g, b, targets, rng).graph, tight).ok);
}
