#include "fixtures.hpp"

#include "idea/losses.hpp"
#include "idea/nn.hpp"

#include <doctest.h>

using namespace idea;
using idea::test::make_graph;

namespace {

IdeaModel toy_model(Index input_dim, Index num_classes, std::uint64_t seed = 0, Index num_domains = 3) {
  ModelShape s;
  s.input_dim = input_dim;
  s.hidden_dim = 6;
  s.latent_dim = 4;
  s.domain_hidden_dim = 5;
  s.num_classes = num_classes;
  s.num_domains = num_domains;
  auto rng = substream(seed, "init");
  return IdeaModel::initialize(s, rng);
}

Graph toy_graph() { return make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 2}}, 2, 3, 4); }

}  // namespace

TEST_CASE("encode with zero noise returns the mean and is deterministic") {
  const Graph g = toy_graph();
  const IdeaModel m = toy_model(3, 2);
  const SparseMatrix adj = normalize_adjacency(g);
  const Matrix zero = Matrix::Zero(5, 4);
  const EncoderOutput a = encode(m.encoder, adj, g.features(), zero);
  const EncoderOutput b = encode(m.encoder, adj, g.features(), zero);
  CHECK(a.z == a.mu);
  CHECK(a.z == b.z);
  CHECK((a.sigma.array() > 0).all());
}

TEST_CASE("encode with a zeroed mean head and unit noise returns sigma") {
  const Graph g = toy_graph();
  IdeaModel m = toy_model(3, 2);
  m.encoder.mean_head = Linear::zeros(m.encoder.mean_head.in_dim(), m.encoder.mean_head.out_dim());
  const EncoderOutput out = encode(m.encoder, normalize_adjacency(g), g.features(), Matrix::Ones(5, 4));
  CHECK((out.mu.array() == 0).all());
  CHECK((out.z - out.sigma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("encode rejects noise of the wrong shape") {
  const Graph g = toy_graph();
  const IdeaModel m = toy_model(3, 2);
  CHECK_THROWS_AS(encode(m.encoder, normalize_adjacency(g), g.features(), Matrix::Zero(5, 3)), Error);
  CHECK_THROWS_AS(encode(m.encoder, normalize_adjacency(g), Matrix::Zero(5, 2), Matrix::Zero(5, 4)), Error);
}

TEST_CASE("reparameterised samples have the encoder mean") {
  const Graph g = toy_graph();
  const IdeaModel m = toy_model(3, 2);
  const SparseMatrix adj = normalize_adjacency(g);
  auto rng = substream(5, "noise");
  const int draws = 10000;
  RowVector sum = RowVector::Zero(4);
  EncoderOutput last;
  for (int i = 0; i < draws; ++i) {
    last = encode(m.encoder, adj, g.features(), rng);
    sum += last.z.row(2);
  }
  const RowVector mean = sum / draws;
  for (Index k = 0; k < 4; ++k) {
    CHECK(std::abs(mean[k] - last.mu(2, k)) <= 4 * last.sigma(2, k) / std::sqrt(static_cast<Real>(draws)));
  }
}

TEST_CASE("classify") {
  ClassifierParams zero{Linear::zeros(4, 3)};
  const Matrix uniform = classify(zero, Matrix::Random(6, 4));
  CHECK((uniform.array() - 1.0 / 3).abs().maxCoeff() < 1e-15);

  ClassifierParams shifted{Linear::zeros(4, 3)};
  shifted.linear.bias << std::log(2.0), 0, 0;
  const Matrix p = classify(shifted, Matrix::Zero(1, 4));
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p(0, 1) == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(p(0, 2) == doctest::Approx(0.25).epsilon(1e-15));

  auto rng = substream(1, "init");
  ClassifierParams random{Linear::glorot(4, 3, rng)};
  const Matrix probs = classify(random, 10 * standard_normal(50, 4, rng));
  CHECK((probs.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-6);
  CHECK_THROWS_AS(classify(random, Matrix::Zero(2, 5)), Error);
}

TEST_CASE("classify_with_domain") {
  DomainAssignment d;
  d.hard = Matrix::Zero(2, 3);
  d.hard(0, 0) = d.hard(1, 2) = 1;
  d.soft = d.hard;
  const Matrix z = Matrix::Ones(2, 4);

  DomainClassifierParams zero{Linear::zeros(7, 2), 3};
  CHECK((classify_with_domain(zero, z, d).array() - 0.5).abs().maxCoeff() < 1e-15);

  auto rng = substream(2, "init");
  DomainClassifierParams p{Linear::glorot(7, 2, rng), 3};
  const Matrix out = classify_with_domain(p, z, d);
  CHECK((out.row(0) - out.row(1)).cwiseAbs().maxCoeff() > 1e-6);

  // Swapping batch rows swaps output rows.
  Matrix z2 = standard_normal(2, 4, rng);
  DomainAssignment swapped = d;
  swapped.hard.row(0).swap(swapped.hard.row(1));
  Matrix z2s = z2;
  z2s.row(0).swap(z2s.row(1));
  const Matrix a = classify_with_domain(p, z2, d);
  const Matrix b = classify_with_domain(p, z2s, swapped);
  CHECK((a.row(0) - b.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.row(1) - b.row(0)).cwiseAbs().maxCoeff() == 0.0);

  DomainAssignment wrong;
  wrong.hard = Matrix::Zero(2, 2);
  wrong.soft = wrong.hard;
  CHECK_THROWS_AS(classify_with_domain(p, z, wrong), Error);
}

TEST_CASE("assign_domains soft and hard codes") {
  auto rng = substream(3, "init");
  DomainLearnerParams s{Linear::glorot(4, 5, rng), Linear::zeros(5, 2)};
  s.output.bias << 3, 3;
  DomainAssignment a = assign_domains(s, standard_normal(1, 4, rng));
  CHECK(a.soft(0, 0) == doctest::Approx(0.5));
  CHECK(a.hard(0, 0) == 1);
  CHECK(a.hard(0, 1) == 0);

  s.output.bias << 10, 0;
  a = assign_domains(s, standard_normal(1, 4, rng));
  CHECK(a.hard(0, 0) == 1);
  CHECK(a.soft(0, 0) > 0.9999);

  DomainLearnerParams r{Linear::glorot(4, 5, rng), Linear::glorot(5, 3, rng)};
  const Matrix z = 5 * standard_normal(40, 4, rng);
  const DomainAssignment many = assign_domains(r, z);
  CHECK((many.soft.rowwise().sum().array() - 1).abs().maxCoeff() < 1e-6);
  CHECK((many.hard.rowwise().sum().array() == 1).all());
  for (Index i = 0; i < z.rows(); ++i) {
    Index arg = 0;
    many.soft.row(i).maxCoeff(&arg);
    CHECK(many.hard(i, arg) == 1);
  }
  CHECK_THROWS_AS(assign_domains(r, Matrix::Zero(2, 3)), Error);
}

TEST_CASE("hard codes are invariant to a per-row logit shift") {
  auto rng = substream(4, "domains");
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix logits = standard_normal(8, 4, rng);
    const Matrix shift = standard_normal(8, 1, rng) * 100;
    const Matrix shifted = logits + shift.replicate(1, 4);
    CHECK(one_hot_argmax(softmax_rows(logits)) == one_hot_argmax(softmax_rows(shifted)));
  }
  Matrix tie(1, 3);
  tie << 1, 2, 2;
  CHECK(one_hot_argmax(tie)(0, 1) == 1);
}

TEST_CASE("gradient_check on a quadratic is exact") {
  const auto loss = [](const Vector& p) { return p.squaredNorm(); };
  const auto grad = [](const Vector& p) -> Vector { return 2 * p; };
  auto rng = substream(0, "gradient_check");
  const Vector p = standard_normal(20, 1, rng);
  CHECK(gradient_check(loss, grad, p, 1e-5).max_relative_error < 1e-8);
}

TEST_CASE("gradient_check reports a zero gradient for an unused parameter") {
  const auto loss = [](const Vector& p) { return std::sin(p[0]) + p[1] * p[1]; };
  const auto grad = [](const Vector& p) -> Vector {
    Vector g = Vector::Zero(p.size());
    g[0] = std::cos(p[0]);
    g[1] = 2 * p[1];
    return g;
  };
  const Vector p = Vector::LinSpaced(3, 0.3, 0.9);
  const GradientCheckResult r = gradient_check(loss, grad, p, 1e-5);
  CHECK(r.analytic[2] == 0.0);
  CHECK(r.numeric[2] == 0.0);
  CHECK(r.max_relative_error < 1e-8);
}

TEST_CASE("gradient_check rejects a non-finite loss") {
  const auto loss = [](const Vector& p) { return std::log(p[0]); };
  const auto grad = [](const Vector& p) -> Vector { return p.cwiseInverse(); };
  CHECK_THROWS_AS(gradient_check(loss, grad, Vector::Constant(1, -1.0), 1e-5), Error);
}

TEST_CASE("predictive loss gradient of the graph-convolution trunk on a 5-node graph") {
  const Graph g = toy_graph();
  auto rng = substream(7, "init");
  GcnModel model = GcnModel::initialize(3, 6, 2, rng);
  const SparseMatrix adj = normalize_adjacency(g);
  const DropoutMasks masks = make_dropout(5, 3, 6, 0.3, rng);
  const NodeList nodes{0, 2, 4};
  Vector w = Vector::Zero(5);
  for (NodeId v : nodes) w[v] = 1.0 / 3;
  const LabelVector labels = g.labels();
  auto views = parameter_views(model);
  const Vector p0 = flatten(views);

  const auto loss = [&](const Vector& p) {
    unflatten(views, p);
    const Matrix probs = softmax_rows(trunk_forward(model.trunk, adj, g.features(), &masks, nullptr));
    return predictive_loss(probs, labels, nodes);
  };
  const auto gradient = [&](const Vector& p) -> Vector {
    unflatten(views, p);
    TrunkCache cache;
    const Matrix probs = softmax_rows(trunk_forward(model.trunk, adj, g.features(), &masks, &cache));
    GcnModel grad{{Linear::zeros(3, 6), Linear::zeros(6, 2)}};
    trunk_backward(model.trunk, adj, cache, cross_entropy_logit_gradient(probs, labels, w), &masks, grad.trunk,
                   nullptr, nullptr);
    return flatten(parameter_views(grad));
  };
  CHECK(gradient_check(loss, gradient, p0, 1e-5).max_relative_error < 1e-4);
  unflatten(views, p0);
}

TEST_CASE("encoder parameter gradients match finite differences") {
  const Graph g = toy_graph();
  IdeaModel model = toy_model(3, 2, 11);
  const SparseMatrix adj = normalize_adjacency(g);
  auto rng = substream(11, "noise");
  const Matrix noise = standard_normal(5, 4, rng);
  const Matrix upstream = standard_normal(5, 4, rng);
  const DropoutMasks masks = make_dropout(5, 3, 6, 0.5, rng);
  auto views = encoder_views(model.encoder);
  const Vector p0 = flatten(views);
  const auto loss = [&](const Vector& p) {
    unflatten(views, p);
    return encode(model.encoder, adj, g.features(), noise, &masks).z.cwiseProduct(upstream).sum();
  };
  const auto gradient = [&](const Vector& p) -> Vector {
    unflatten(views, p);
    EncoderCache cache;
    const EncoderOutput out = encode(model.encoder, adj, g.features(), noise, &masks, &cache);
    IdeaModel grad = IdeaModel::zeros_like(model);
    encode_backward(model.encoder, adj, out, cache, upstream, &masks, grad.encoder);
    return flatten(encoder_views(grad.encoder));
  };
  CHECK(gradient_check(loss, gradient, p0, 1e-5).max_relative_error < 1e-4);
}

TEST_CASE("classifier feature and adjacency gradients match finite differences") {
  const Graph g = toy_graph();
  const IdeaModel idea_model = toy_model(3, 2, 12);
  auto rng = substream(12, "init");
  const GcnModel gcn_model = GcnModel::initialize(3, 6, 2, rng);
  const IdeaClassifier idea(idea_model);
  const GcnClassifier gcn(gcn_model);
  const NodeList nodes{1, 3, 4};
  const SparseMatrix adj = normalize_adjacency(g);
  for (const NodeClassifier* model : {static_cast<const NodeClassifier*>(&idea), static_cast<const NodeClassifier*>(&gcn)}) {
    // Features.
    const Vector x0 = g.features().reshaped();
    const auto loss_x = [&](const Vector& x) {
      return model->loss(adj, x.reshaped(5, 3), nodes, g.labels());
    };
    const auto grad_x = [&](const Vector& x) -> Vector {
      Matrix d;
      model->loss(adj, x.reshaped(5, 3), nodes, g.labels(), &d);
      return d.reshaped();
    };
    CHECK(gradient_check(loss_x, grad_x, x0, 1e-5).max_relative_error < 1e-4);

    // Dense adjacency entries, including absent pairs.
    const Matrix a0 = Matrix(adj);
    const auto loss_a = [&](const Vector& a) {
      const SparseMatrix s = Matrix(a.reshaped(5, 5)).sparseView(0, 0);
      return model->loss(s, g.features(), nodes, g.labels());
    };
    const auto grad_a = [&](const Vector& a) -> Vector {
      const SparseMatrix s = Matrix(a.reshaped(5, 5)).sparseView(0, 0);
      AdjacencyGradient d;
      model->loss(s, g.features(), nodes, g.labels(), nullptr, &d);
      return d.dense().reshaped();
    };
    CHECK(gradient_check(loss_a, grad_a, a0.reshaped(), 1e-5).max_relative_error < 1e-4);
  }
}

TEST_CASE("parameter views round-trip through flatten") {
  IdeaModel m = toy_model(3, 2, 13);
  auto views = parameter_views(m);
  const Vector p = flatten(views);
  IdeaModel copy = IdeaModel::zeros_like(m);
  auto copy_views = parameter_views(copy);
  unflatten(copy_views, p);
  CHECK(flatten(copy_views) == p);
  CHECK(copy.encoder.trunk.conv1.weight == m.encoder.trunk.conv1.weight);
  CHECK(copy.domain_learner.output.bias == m.domain_learner.output.bias);
}
