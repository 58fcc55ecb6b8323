#include "objective_fixture.hpp"

#include <doctest.h>

#include <fstream>

using namespace idea;
using idea::test::make_graph;
using idea::test::ObjectiveFixture;
using idea::test::small_bundle;
using idea::test::TempDir;

namespace {

TrainConfig small_config(std::uint64_t seed = 0) {
  TrainConfig c;
  c.seed = seed;
  c.hidden_dim = 16;
  c.latent_dim = 8;
  c.domain_hidden_dim = 8;
  c.num_domains = 3;
  c.epochs = 20;
  return c;
}

/// 20 nodes with half of them in the training split.
DatasetBundle toy20() {
  DatasetBundle b = small_bundle(20, 5, 8, 2);
  b.splits = make_split(b.graph, {0.5, 0.25, 0.25}, 5);
  return b;
}

TrainConfig no_attacks(TrainConfig c) {
  c.train_feature_eps = 0;
  c.train_edge_rate = 0;
  return c;
}

bool same_parameters(IdeaModel a, IdeaModel b) { return flatten(parameter_views(a)) == flatten(parameter_views(b)); }

}  // namespace

TEST_CASE("update_model_step reduces the predictive loss on a 20-node toy") {
  // With ten labelled nodes the alpha=100 gap term dominates and L_P does
  // not settle, so the descent check runs at alpha=1.
  const DatasetBundle data = toy20();
  TrainConfig c = small_config(1);
  c.alpha = 1;
  TrainState s = initialize_state(data, c);
  Real first = 0, last = 0;
  for (int step = 0; step < 200; ++step) {
    const LossBreakdown l = update_model_step(s, data, data.splits.train, c);
    if (step == 0) first = l.predictive;
    last = l.predictive;
  }
  CHECK(last <= 0.5 * first);
}

TEST_CASE("update_model_step is deterministic and rejects an empty batch") {
  const DatasetBundle data = toy20();
  const TrainConfig c = small_config(2);
  TrainState a = initialize_state(data, c);
  TrainState b = a;
  const LossBreakdown la = update_model_step(a, data, data.splits.train, c);
  const LossBreakdown lb = update_model_step(b, data, data.splits.train, c);
  CHECK(la.total == lb.total);
  CHECK(la.predictive == lb.predictive);
  CHECK(same_parameters(a.model, b.model));
  CHECK_THROWS_AS(update_model_step(a, data, NodeList{}, c), Error);
}

TEST_CASE("with alpha 0 and a domain classifier cloned from the classifier, L_I equals L_P") {
  ObjectiveFixture f(30);
  const Index dz = f.model.classifier.linear.in_dim();
  f.model.domain_classifier.linear.weight.setZero();
  f.model.domain_classifier.linear.weight.topRows(dz) = f.model.classifier.linear.weight;
  f.model.domain_classifier.linear.bias = f.model.classifier.linear.bias;
  const LossBreakdown l = model_objective(f.model, f.batch, &f.hard, 0, {1, 1, 1}, true, nullptr);
  CHECK(l.node_invariance == doctest::Approx(l.predictive).epsilon(1e-14));
}

TEST_CASE("the attacker keeps the clean graph when budgets are zero") {
  const DatasetBundle data = toy20();
  const TrainConfig c = no_attacks(small_config(3));
  TrainState s = initialize_state(data, c);
  update_attacker_step(s, data, data.splits.train, c);
  CHECK(s.cached_perturbation == data.graph);
  CHECK(s.cached_perturbation.features() == data.graph.features());
}

TEST_CASE("the cached perturbation never loses to the clean graph or to its predecessor") {
  const DatasetBundle data = small_bundle(60, 6, 12, 3);
  TrainConfig c = small_config(4);
  c.train_feature_eps = 0.2;
  c.train_edge_rate = 0.1;
  TrainState s = initialize_state(data, c);
  const IdeaClassifier frozen(s.model);
  const NodeList& batch = data.splits.train;
  const Real clean = frozen.loss(normalize_adjacency(data.graph), data.graph.features(), batch, data.graph.labels());
  Real previous = -1;
  for (int i = 0; i < 5; ++i) {
    const Real cached = update_attacker_step(s, data, batch, c);
    CHECK(cached >= clean);
    CHECK(cached >= previous);
    const Graph& g = s.cached_perturbation;
    CHECK(cached == frozen.loss(normalize_adjacency(g), g.features(), batch, data.graph.labels()));
    previous = cached;
  }
}

TEST_CASE("identical representations give a vanishing domain learner gradient") {
  ObjectiveFixture f(31);
  // A zero mean head and zero noise make every row of z equal.
  f.model.encoder.mean_head.weight.setZero();
  f.batch.clean_noise.setZero();
  f.batch.perturbed_noise.setZero();
  DomainLearnerParams g{Linear::zeros(f.model.domain_learner.hidden.in_dim(), f.model.domain_learner.hidden.out_dim()),
                        Linear::zeros(f.model.domain_learner.output.in_dim(), f.model.domain_learner.output.out_dim())};
  domain_objective(f.model, f.batch, &g);
  CHECK(flatten(domain_learner_views(g)).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("domain learner steps are deterministic and lower L_D") {
  const DatasetBundle data = small_bundle(60, 7, 12, 3);
  TrainConfig c = small_config(5);
  c.domain_learning_rate = 1e-2;
  TrainState a = initialize_state(data, c);
  // Train the encoder a little so representations carry structure.
  for (int i = 0; i < 20; ++i) update_model_step(a, data, data.splits.train, c);
  TrainState b = a;
  const Real first = update_domain_learner_step(a, data, data.splits.train, c);
  update_domain_learner_step(b, data, data.splits.train, c);
  CHECK(same_parameters(a.model, b.model));
  Real last = first;
  for (int i = 1; i < 50; ++i) last = update_domain_learner_step(a, data, data.splits.train, c);
  CHECK(last <= first);

  TrainConfig one = c;
  one.num_domains = 1;
  CHECK_THROWS_AS(initialize_state(data, one), Error);
}

TEST_CASE("fit with no epochs returns the initial model") {
  const DatasetBundle data = toy20();
  TrainConfig c = small_config(6);
  c.epochs = 0;
  const TrainState fitted = fit(data, c);
  const TrainState init = initialize_state(data, c);
  CHECK(fitted.history.empty());
  CHECK(same_parameters(fitted.model, init.model));
  CHECK(same_parameters(fitted.best_model, init.model));
}

TEST_CASE("fit is deterministic and leaves the dataset untouched") {
  const DatasetBundle data = small_bundle(60, 8, 12, 3);
  const DatasetBundle copy = data;
  const TrainConfig c = small_config(7);
  const TrainState a = fit(data, c);
  const TrainState b = fit(data, c);
  CHECK(a.best_val_accuracy == b.best_val_accuracy);
  CHECK(a.best_epoch == b.best_epoch);
  CHECK(same_parameters(a.best_model, b.best_model));
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].losses.total == b.history[i].losses.total);
    CHECK(a.history[i].domain_loss == b.history[i].domain_loss);
  }
  CHECK(data.graph == copy.graph);
  CHECK(data.graph.features() == copy.graph.features());
  CHECK(data.splits.train == copy.splits.train);
}

TEST_CASE("fit aborts after three non-finite steps") {
  const DatasetBundle data = toy20();
  const TrainConfig c = no_attacks(small_config(8));
  TrainState s = initialize_state(data, c);
  s.model.classifier.linear.weight(0, 0) = std::numeric_limits<Real>::quiet_NaN();
  CHECK(std::isnan(update_model_step(s, data, data.splits.train, c).total));
  CHECK(std::isnan(update_model_step(s, data, data.splits.train, c).total));
  try {
    update_model_step(s, data, data.splits.train, c);
    FAIL("expected an abort");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
  }
}

TEST_CASE("checkpoints round-trip to bit-identical predictions") {
  TempDir dir;
  const DatasetBundle data = small_bundle(40, 9, 10, 3);
  const TrainState s = fit(data, small_config(9));
  save_checkpoint(s.best_model, dir / "idea", {{"seed", 9}});
  const LoadedModel idea = load_checkpoint(dir / "idea");
  CHECK(idea.kind == "idea");
  CHECK(idea.manifest["seed"] == 9);
  const SparseMatrix adj = normalize_adjacency(data.graph);
  CHECK(idea.classifier()->predict(adj, data.graph.features()) ==
        IdeaClassifier(s.best_model).predict(adj, data.graph.features()));

  const GcnModel gcn = fit_gcn(data, small_config(9));
  save_checkpoint(gcn, dir / "gcn", Json::object());
  const LoadedModel back = load_checkpoint(dir / "gcn");
  CHECK(back.kind == "gcn");
  CHECK(back.classifier()->predict(adj, data.graph.features()) == GcnClassifier(gcn).predict(adj, data.graph.features()));

  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), MissingCheckpoint);
}

TEST_CASE("metrics log has one row per epoch") {
  TempDir dir;
  const DatasetBundle data = toy20();
  TrainConfig c = small_config(10);
  c.epochs = 4;
  c.patience = 100;
  const TrainState s = fit(data, c);
  write_metrics_csv(s.history, dir / "metrics.csv");
  std::ifstream in(dir / "metrics.csv");
  std::string header, line;
  std::getline(in, header);
  CHECK(header == "epoch,L_P,L_I,L_E,L_D,val_accuracy");
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

TEST_CASE("with alpha 0, two domains and no attacks the model tracks the plain baseline") {
  // Per-seed test accuracy carries about one point of sampling noise, so the
  // gap is averaged over seeds.
  Real gap = 0;
  const int seeds = 4;
  for (int seed = 11; seed < 11 + seeds; ++seed) {
    const DatasetBundle data = small_bundle(600, static_cast<std::uint64_t>(seed), 32, 3);
    TrainConfig c = no_attacks(small_config(static_cast<std::uint64_t>(seed)));
    c.alpha = 0;
    c.num_domains = 2;
    c.hidden_dim = 32;
    c.latent_dim = 16;
    c.epochs = 200;
    const TrainState s = fit(data, c);
    const GcnModel gcn = fit_gcn(data, c);
    const Real idea_acc = accuracy(IdeaClassifier(s.best_model), data.graph, data.splits.test);
    const Real gcn_acc = accuracy(GcnClassifier(gcn), data.graph, data.splits.test);
    MESSAGE("seed " << seed << ": alpha-0 model " << idea_acc << ", baseline " << gcn_acc);
    gap += (idea_acc - gcn_acc) / seeds;
  }
  CHECK(std::abs(gap) <= 0.01);
}
