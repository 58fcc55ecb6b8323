#include "idea/trainer.hpp"

#include "idea/rng.hpp"

#include <bit>
#include <cmath>
#include <fstream>

namespace idea {

namespace {

/// Gathers rows `ids` of `source`.
Matrix gather_rows(const Matrix& source, std::span<const NodeId> ids) {
  Matrix out(static_cast<Index>(ids.size()), source.cols());
  for (Index r = 0; r < out.rows(); ++r) out.row(r) = source.row(ids[r]);
  return out;
}

/// Samples matrix: rows of `clean` at ids, then rows of `perturbed` at ids.
Matrix stack_views(const Matrix& clean, const Matrix& perturbed, std::span<const NodeId> ids) {
  const Index b = static_cast<Index>(ids.size());
  Matrix out(2 * b, clean.cols());
  out.topRows(b) = gather_rows(clean, ids);
  out.bottomRows(b) = gather_rows(perturbed, ids);
  return out;
}

void scatter_views(const Matrix& d_samples, std::span<const NodeId> ids, Matrix& d_clean, Matrix& d_perturbed) {
  const Index b = static_cast<Index>(ids.size());
  for (Index r = 0; r < b; ++r) {
    d_clean.row(ids[r]) += d_samples.row(r);
    d_perturbed.row(ids[r]) += d_samples.row(b + r);
  }
}

std::vector<ParameterView> trainable_views(IdeaModel& model) {
  std::vector<ParameterView> views = encoder_views(model.encoder);
  append_views(model.classifier.linear, "classifier", views, true);
  append_views(model.domain_classifier.linear, "domain_classifier", views, true);
  return views;
}

void check_batch(std::span<const NodeId> batch, const Graph& graph) {
  if (batch.empty()) throw Error("empty batch");
  for (NodeId v : batch) {
    if (!graph.contains(v) || graph.label(v) < 0) throw Error("batch node " + std::to_string(v) + " is not labeled");
  }
}

Real feature_range(const Graph& graph) {
  if (graph.num_nodes() == 0 || graph.num_features() == 0) return 0;
  return graph.features().maxCoeff() - graph.features().minCoeff();
}

ModelBatch make_batch(TrainState& state, const Graph& clean, const SparseMatrix& clean_adj, const Graph& perturbed,
                      const SparseMatrix& perturbed_adj, std::span<const NodeId> nodes, const TrainConfig& config) {
  ModelBatch b;
  b.clean_adj = &clean_adj;
  b.clean_features = &clean.features();
  b.perturbed_adj = &perturbed_adj;
  b.perturbed_features = &perturbed.features();
  b.labels = &clean.labels();
  b.nodes.assign(nodes.begin(), nodes.end());
  for (NodeId v : nodes) b.neighbors.push_back(sample_neighbor(clean, v, state.rng.neighbor));
  const Index dz = state.model.encoder.latent_dim();
  b.clean_noise = standard_normal(clean.num_nodes(), dz, state.rng.noise);
  b.perturbed_noise = standard_normal(perturbed.num_nodes(), dz, state.rng.noise);
  const Index hidden = state.model.encoder.trunk.conv1.out_dim();
  b.clean_dropout = make_dropout(clean.num_nodes(), clean.num_features(), hidden, config.dropout, state.rng.dropout);
  b.perturbed_dropout =
      make_dropout(perturbed.num_nodes(), perturbed.num_features(), hidden, config.dropout, state.rng.dropout);
  return b;
}

Matrix fixed_domain_one_hot(const TrainState& state, std::span<const NodeId> nodes, Index num_domains) {
  const Index b = static_cast<Index>(nodes.size());
  Matrix hard = Matrix::Zero(2 * b, num_domains);
  for (Index r = 0; r < b; ++r) {
    hard(r, static_cast<Index>(state.fixed_domains(0, nodes[r]))) = 1;
    hard(b + r, static_cast<Index>(state.fixed_domains(1, nodes[r]))) = 1;
  }
  return hard;
}

template <typename T>
void write_binary(const std::vector<ParameterView>& views, const fs::path& path) {
  static_assert(std::endian::native == std::endian::little, "checkpoints assume a little-endian host");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& v : views) {
    out.write(reinterpret_cast<const char*>(v.data), static_cast<std::streamsize>(v.size * sizeof(T)));
  }
  if (!out) throw Error("write failed: " + path.string());
}

void read_binary(const std::vector<ParameterView>& views, const fs::path& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  Index expected = 0;
  for (const auto& v : views) expected += v.size;
  const auto bytes = static_cast<Index>(in.tellg());
  if (bytes != expected * static_cast<Index>(sizeof(Real))) {
    throw Error(path.string() + ": expected " + std::to_string(expected) + " parameters, found " +
                std::to_string(bytes / static_cast<Index>(sizeof(Real))));
  }
  in.seekg(0);
  for (const auto& v : views) in.read(reinterpret_cast<char*>(v.data), static_cast<std::streamsize>(v.size * sizeof(Real)));
}

}  // namespace

ObjectiveWeights variant_weights(Variant variant) {
  ObjectiveWeights w;
  if (variant == Variant::no_LI || variant == Variant::no_LI_LE) w.node_invariance = 0;
  if (variant == Variant::no_LE || variant == Variant::no_LI_LE) w.structure_invariance = 0;
  return w;
}

LossBreakdown model_objective(const IdeaModel& model, const ModelBatch& batch, const Matrix* hard_domains, Real alpha,
                              const ObjectiveWeights& weights, bool detach_domain_classifier, IdeaModel* grad) {
  if (batch.nodes.empty()) throw Error("empty batch");
  if (batch.neighbors.size() != batch.nodes.size()) throw Error("one sampled neighbour per batch node required");
  EncoderCache clean_cache, perturbed_cache;
  const auto clean = encode(model.encoder, *batch.clean_adj, *batch.clean_features, batch.clean_noise,
                            &batch.clean_dropout, &clean_cache);
  const auto perturbed = encode(model.encoder, *batch.perturbed_adj, *batch.perturbed_features, batch.perturbed_noise,
                                &batch.perturbed_dropout, &perturbed_cache);

  const Index b = static_cast<Index>(batch.nodes.size());
  const Index samples = 2 * b;
  const Matrix z = stack_views(clean.z, perturbed.z, batch.nodes);
  const Matrix z_nbr = stack_views(clean.z, perturbed.z, batch.neighbors);
  LabelVector y(samples);
  for (Index r = 0; r < b; ++r) y[r] = y[b + r] = (*batch.labels)[batch.nodes[r]];

  const Matrix hard = hard_domains ? *hard_domains : assign_domains(model.domain_learner, z).hard;
  if (hard.rows() != samples) throw Error("domain assignment must cover every sample");

  const Matrix in_gd = domain_classifier_input(z, hard);
  const Matrix in_gd_nbr = domain_classifier_input(z_nbr, hard);
  const Matrix p_g = softmax_rows(model.classifier.linear.forward(z));
  const Matrix p_gd = softmax_rows(model.domain_classifier.linear.forward(in_gd));
  const Matrix p_g_nbr = softmax_rows(model.classifier.linear.forward(z_nbr));
  const Matrix p_gd_nbr = softmax_rows(model.domain_classifier.linear.forward(in_gd_nbr));

  NodeList all(static_cast<std::size_t>(samples));
  for (Index r = 0; r < samples; ++r) all[r] = r;
  const Real lp = weights.predictive != 0 ? weights.predictive * predictive_loss(p_g, y, all) : 0;
  const Real li =
      weights.node_invariance != 0 ? weights.node_invariance * node_invariance_loss(p_g, p_gd, y, all, alpha) : 0;
  const Real le = weights.structure_invariance != 0
                      ? weights.structure_invariance * structure_invariance_loss(p_g_nbr, p_gd_nbr, y, all, alpha)
                      : 0;
  const LossBreakdown result = total_loss(lp, li, le, alpha);
  if (!grad) return result;

  const Real inv = Real(1) / static_cast<Real>(samples);
  auto constant = [&](Real v) { return Vector::Constant(samples, v); };
  const Real w_g = (weights.predictive + weights.node_invariance * alpha) * inv;
  const Real w_gd = weights.node_invariance * (1 - alpha) * inv;
  const Real w_g_nbr = weights.structure_invariance * alpha * inv;
  const Real w_gd_nbr = weights.structure_invariance * (1 - alpha) * inv;

  const Index dz = z.cols();

  // Node branch.
  const Matrix d_logits_g = cross_entropy_logit_gradient(p_g, y, constant(w_g));
  Matrix d_z = model.classifier.linear.backward(z, d_logits_g, grad->classifier.linear);
  const Matrix d_logits_gd = cross_entropy_logit_gradient(p_gd, y, constant(w_gd));
  d_z += (d_logits_gd * model.domain_classifier.linear.weight.transpose()).leftCols(dz);

  // Neighbour branch.
  const Matrix d_logits_g_nbr = cross_entropy_logit_gradient(p_g_nbr, y, constant(w_g_nbr));
  Matrix d_z_nbr = model.classifier.linear.backward(z_nbr, d_logits_g_nbr, grad->classifier.linear);
  const Matrix d_logits_gd_nbr = cross_entropy_logit_gradient(p_gd_nbr, y, constant(w_gd_nbr));
  d_z_nbr += (d_logits_gd_nbr * model.domain_classifier.linear.weight.transpose()).leftCols(dz);

  // Domain classifier parameters.
  Linear& gd = grad->domain_classifier.linear;
  if (detach_domain_classifier) {
    const Matrix own = cross_entropy_logit_gradient(p_gd, y, constant(weights.node_invariance * inv));
    const Matrix own_nbr = cross_entropy_logit_gradient(p_gd_nbr, y, constant(weights.structure_invariance * inv));
    gd.weight.noalias() += in_gd.transpose() * own + in_gd_nbr.transpose() * own_nbr;
    gd.bias += own.colwise().sum() + own_nbr.colwise().sum();
  } else {
    gd.weight.noalias() += in_gd.transpose() * d_logits_gd + in_gd_nbr.transpose() * d_logits_gd_nbr;
    gd.bias += d_logits_gd.colwise().sum() + d_logits_gd_nbr.colwise().sum();
  }

  Matrix d_clean = Matrix::Zero(clean.z.rows(), dz);
  Matrix d_perturbed = Matrix::Zero(perturbed.z.rows(), dz);
  scatter_views(d_z, batch.nodes, d_clean, d_perturbed);
  scatter_views(d_z_nbr, batch.neighbors, d_clean, d_perturbed);
  encode_backward(model.encoder, *batch.clean_adj, clean, clean_cache, d_clean, &batch.clean_dropout, grad->encoder);
  encode_backward(model.encoder, *batch.perturbed_adj, perturbed, perturbed_cache, d_perturbed,
                  &batch.perturbed_dropout, grad->encoder);
  return result;
}

Real domain_objective(const IdeaModel& model, const ModelBatch& batch, DomainLearnerParams* grad) {
  if (model.num_domains() < 2) throw Error("the domain learner needs at least two domains");
  const auto clean =
      encode(model.encoder, *batch.clean_adj, *batch.clean_features, batch.clean_noise, &batch.clean_dropout);
  const auto perturbed = encode(model.encoder, *batch.perturbed_adj, *batch.perturbed_features,
                                batch.perturbed_noise, &batch.perturbed_dropout);
  const Index b = static_cast<Index>(batch.nodes.size());
  const Matrix z = stack_views(clean.z, perturbed.z, batch.nodes);
  LabelVector y(2 * b);
  for (Index r = 0; r < b; ++r) y[r] = y[b + r] = (*batch.labels)[batch.nodes[r]];
  const Matrix p_g = classify(model.classifier, z);

  DomainLearnerCache cache;
  const Matrix soft = softmax_rows(domain_logits(model.domain_learner, z, &cache));
  Matrix d_soft;
  const Real loss = domain_diversity_loss(z, p_g, y, soft, grad ? &d_soft : nullptr);
  if (grad) {
    // Softmax Jacobian applied row-wise.
    const Vector inner = soft.cwiseProduct(d_soft).rowwise().sum();
    const Matrix d_logits = soft.cwiseProduct(d_soft.colwise() - inner);
    domain_logits_backward(model.domain_learner, z, cache, d_logits, *grad);
  }
  return loss;
}

AttackBudget training_budget(const TrainConfig& config, const Graph& graph) {
  AttackBudget b;
  b.feature_eps = config.train_feature_eps * feature_range(graph);
  b.feature_steps = config.train_feature_steps;
  b.edge_budget = static_cast<Index>(std::floor(config.train_edge_rate * static_cast<Real>(graph.num_edges()) + 1e-9));
  b.structure_candidates = config.train_structure_candidates;
  b.validate();
  return b;
}

TrainState initialize_state(const DatasetBundle& data, const TrainConfig& config) {
  if (config.num_domains < 2) throw Error("num_domains must be at least 2");
  if (config.alpha < 0) throw Error("alpha must be nonnegative");
  if (config.domain_classifier_steps < 0) throw Error("domain_classifier_steps must be nonnegative");
  const Graph& g = data.graph;
  ModelShape shape;
  shape.input_dim = g.num_features();
  shape.hidden_dim = config.hidden_dim;
  shape.latent_dim = config.latent_dim;
  shape.domain_hidden_dim = config.domain_hidden_dim;
  shape.num_classes = g.num_classes();
  shape.num_domains = config.num_domains;
  shape.scale_bias_init = config.scale_bias_init;

  TrainState s;
  auto init = substream(config.seed, "init");
  s.model = IdeaModel::initialize(shape, init);
  s.best_model = s.model;
  s.model_optimizer = Adam({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  s.domain_optimizer = Adam({config.domain_learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  s.domain_classifier_optimizer = Adam({config.learning_rate, 0.9, 0.999, 1e-8, 0});
  s.cached_perturbation = g;
  s.rng = {substream(config.seed, "batch"), substream(config.seed, "neighbor"), substream(config.seed, "attack"),
           substream(config.seed, "noise"), substream(config.seed, "dropout")};
  auto domains = substream(config.seed, "domains");
  std::uniform_int_distribution<int> pick(0, config.num_domains - 1);
  s.fixed_domains.resize(2, g.num_nodes());
  for (Index v = 0; v < g.num_nodes(); ++v) {
    s.fixed_domains(0, v) = pick(domains);
    s.fixed_domains(1, v) = pick(domains);
  }
  return s;
}

NodeList draw_batch(TrainState& state, const DatasetBundle& data, const TrainConfig& config) {
  NodeList nodes = data.splits.train;
  if (config.batch_size <= 0 || config.batch_size >= static_cast<int>(nodes.size())) return nodes;
  shuffle(nodes, state.rng.batch);
  nodes.resize(static_cast<std::size_t>(config.batch_size));
  std::sort(nodes.begin(), nodes.end());
  return nodes;
}

Graph generate_perturbation(TrainState& state, const Graph& clean, std::span<const NodeId> batch,
                            const TrainConfig& config) {
  const AttackBudget budget = training_budget(config, clean);
  const IdeaClassifier view(state.model);
  const PerturbedGraph structured = structure_attack_train(view, clean, budget, batch, state.rng.attack);
  return feature_attack_train(view, structured.graph, budget, batch).graph;
}

LossBreakdown update_model_step(TrainState& state, const DatasetBundle& data, std::span<const NodeId> batch,
                                const TrainConfig& config) {
  const Graph& clean = data.graph;
  check_batch(batch, clean);
  const Graph perturbed = generate_perturbation(state, clean, batch, config);
  const SparseMatrix clean_adj = normalize_adjacency(clean);
  const SparseMatrix perturbed_adj = normalize_adjacency(perturbed);
  const ModelBatch b = make_batch(state, clean, clean_adj, perturbed, perturbed_adj, batch, config);

  Matrix fixed;
  if (config.variant == Variant::no_LD) fixed = fixed_domain_one_hot(state, batch, state.model.num_domains());
  IdeaModel grad = IdeaModel::zeros_like(state.model);
  const LossBreakdown losses = model_objective(state.model, b, config.variant == Variant::no_LD ? &fixed : nullptr,
                                               config.alpha, variant_weights(config.variant), true, &grad);
  if (!std::isfinite(losses.total)) {
    if (++state.nonfinite_streak >= 3) {
      throw Error("non-finite training loss for 3 consecutive steps (epoch " + std::to_string(state.epoch) +
                  ", L_P=" + format_real(losses.predictive) + ", L_I=" + format_real(losses.node_invariance) +
                  ", L_E=" + format_real(losses.structure_invariance) + ")");
    }
    return losses;
  }
  state.nonfinite_streak = 0;
  state.model_optimizer.step(trainable_views(state.model), trainable_views(grad));
  // Refit the domain classifier on its own likelihood at the current encoder.
  ObjectiveWeights refit = variant_weights(config.variant);
  refit.predictive = 0;
  if (refit.node_invariance == 0 && refit.structure_invariance == 0) return losses;
  for (int i = 0; i < config.domain_classifier_steps; ++i) {
    IdeaModel g = IdeaModel::zeros_like(state.model);
    model_objective(state.model, b, config.variant == Variant::no_LD ? &fixed : nullptr, 0, refit, true, &g);
    std::vector<ParameterView> params, grads;
    append_views(state.model.domain_classifier.linear, "domain_classifier", params, false);
    append_views(g.domain_classifier.linear, "domain_classifier", grads, false);
    state.domain_classifier_optimizer.step(params, grads);
  }
  return losses;
}

Real update_attacker_step(TrainState& state, const DatasetBundle& data, std::span<const NodeId> batch,
                          const TrainConfig& config) {
  const Graph& clean = data.graph;
  check_batch(batch, clean);
  const IdeaClassifier view(state.model);
  auto loss_on = [&](const Graph& g) {
    return view.loss(normalize_adjacency(g), g.features(), batch, clean.labels());
  };
  Graph fresh = generate_perturbation(state, clean, batch, config);
  Real best = loss_on(state.cached_perturbation);
  const Real fresh_loss = loss_on(fresh);
  if (fresh_loss > best) {
    best = fresh_loss;
    state.cached_perturbation = std::move(fresh);
  }
  const Real clean_loss = loss_on(clean);
  if (clean_loss > best) {
    best = clean_loss;
    state.cached_perturbation = clean;
  }
  return best;
}

Real update_domain_learner_step(TrainState& state, const DatasetBundle& data, std::span<const NodeId> batch,
                                const TrainConfig& config) {
  if (state.model.num_domains() < 2) throw Error("the domain learner needs at least two domains");
  const Graph& clean = data.graph;
  check_batch(batch, clean);
  const SparseMatrix clean_adj = normalize_adjacency(clean);
  const SparseMatrix perturbed_adj = normalize_adjacency(state.cached_perturbation);
  const ModelBatch b =
      make_batch(state, clean, clean_adj, state.cached_perturbation, perturbed_adj, batch, config);
  if (config.variant == Variant::no_LD) return domain_objective(state.model, b, nullptr);
  DomainLearnerParams grad{Linear::zeros(state.model.domain_learner.hidden.in_dim(),
                                         state.model.domain_learner.hidden.out_dim()),
                           Linear::zeros(state.model.domain_learner.output.in_dim(),
                                         state.model.domain_learner.output.out_dim())};
  const Real loss = domain_objective(state.model, b, &grad);
  if (std::isfinite(loss)) {
    state.domain_optimizer.step(domain_learner_views(state.model.domain_learner), domain_learner_views(grad));
  }
  return loss;
}

Real accuracy(const NodeClassifier& classifier, const Graph& graph, std::span<const NodeId> nodes) {
  if (nodes.empty()) throw Error("accuracy over an empty node set");
  const Matrix probs = classifier.predict(normalize_adjacency(graph), graph.features());
  Index correct = 0;
  for (NodeId v : nodes) {
    if (graph.label(v) < 0) throw Error("node " + std::to_string(v) + " is unlabeled");
    Index best = 0;
    for (Index k = 1; k < probs.cols(); ++k) {
      if (probs(v, k) > probs(v, best)) best = k;
    }
    if (best == graph.label(v)) ++correct;
  }
  return static_cast<Real>(correct) / static_cast<Real>(nodes.size());
}

TrainState fit(const DatasetBundle& data, const TrainConfig& config, const FitHooks& hooks) {
  TrainState state = initialize_state(data, config);
  const NodeList& val = data.splits.val.empty() ? data.splits.train : data.splits.val;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    state.epoch = epoch;
    EpochMetrics m;
    m.epoch = epoch;
    m.losses = update_model_step(state, data, draw_batch(state, data, config), config);
    update_attacker_step(state, data, draw_batch(state, data, config), config);
    m.domain_loss = update_domain_learner_step(state, data, draw_batch(state, data, config), config);
    m.val_accuracy = accuracy(IdeaClassifier(state.model), data.graph, val);
    state.history.push_back(m);
    if (hooks.on_epoch) hooks.on_epoch(m);
    if (m.val_accuracy > state.best_val_accuracy) {
      state.best_val_accuracy = m.val_accuracy;
      state.best_epoch = epoch;
      state.best_model = state.model;
      if (hooks.on_improvement) hooks.on_improvement(state);
    } else if (epoch - state.best_epoch >= config.patience) {
      break;
    }
  }
  return state;
}

GcnModel fit_gcn(const DatasetBundle& data, const TrainConfig& config, Real* best_val_accuracy) {
  const Graph& g = data.graph;
  auto init = substream(config.seed, "init");
  GcnModel model = GcnModel::initialize(g.num_features(), config.hidden_dim, g.num_classes(), init);
  GcnModel best = model;
  Real best_val = -1;
  int best_epoch = 0;
  auto dropout_rng = substream(config.seed, "dropout");
  Adam optimizer({config.learning_rate, 0.9, 0.999, 1e-8, config.weight_decay});
  const SparseMatrix adj = normalize_adjacency(g);
  const NodeList& val = data.splits.val.empty() ? data.splits.train : data.splits.val;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const DropoutMasks masks =
        make_dropout(g.num_nodes(), g.num_features(), config.hidden_dim, config.dropout, dropout_rng);
    TrunkCache cache;
    const Matrix probs = softmax_rows(trunk_forward(model.trunk, adj, g.features(), &masks, &cache));
    Vector w = Vector::Zero(g.num_nodes());
    for (NodeId v : data.splits.train) w[v] = Real(1) / static_cast<Real>(data.splits.train.size());
    LabelVector labels = g.labels().cwiseMax(0);
    const Matrix d_logits = cross_entropy_logit_gradient(probs, labels, w);
    GcnModel grad{{Linear::zeros(model.trunk.conv1.in_dim(), model.trunk.conv1.out_dim()),
                   Linear::zeros(model.trunk.conv2.in_dim(), model.trunk.conv2.out_dim())}};
    trunk_backward(model.trunk, adj, cache, d_logits, &masks, grad.trunk, nullptr, nullptr);
    optimizer.step(parameter_views(model), parameter_views(grad));
    const Real acc = accuracy(GcnClassifier(model), g, val);
    if (acc > best_val) {
      best_val = acc;
      best_epoch = epoch;
      best = model;
    } else if (epoch - best_epoch >= config.patience) {
      break;
    }
  }
  if (best_val_accuracy) *best_val_accuracy = best_val;
  return best;
}

// --- Checkpoints -------------------------------------------------------------

void save_checkpoint(const IdeaModel& model, const fs::path& dir, const Json& manifest_extra) {
  fs::create_directories(dir);
  IdeaModel copy = model;
  const auto views = parameter_views(copy);
  write_binary<Real>(views, dir / "checkpoint.bin");
  const ModelShape s = model.shape();
  Json manifest = Json::object();
  manifest["kind"] = "idea";
  manifest["architecture"] = {{"input_dim", s.input_dim},         {"hidden_dim", s.hidden_dim},
                              {"latent_dim", s.latent_dim},       {"domain_hidden_dim", s.domain_hidden_dim},
                              {"num_classes", s.num_classes},     {"num_domains", s.num_domains}};
  manifest["num_parameters"] = flatten(views).size();
  for (const auto& [k, v] : manifest_extra.items()) manifest[k] = v;
  write_json(manifest, dir / "manifest.json");
}

void save_checkpoint(const GcnModel& model, const fs::path& dir, const Json& manifest_extra) {
  fs::create_directories(dir);
  GcnModel copy = model;
  const auto views = parameter_views(copy);
  write_binary<Real>(views, dir / "checkpoint.bin");
  Json manifest = Json::object();
  manifest["kind"] = "gcn";
  manifest["architecture"] = {{"input_dim", model.trunk.conv1.in_dim()},
                              {"hidden_dim", model.trunk.conv1.out_dim()},
                              {"num_classes", model.trunk.conv2.out_dim()}};
  manifest["num_parameters"] = flatten(views).size();
  for (const auto& [k, v] : manifest_extra.items()) manifest[k] = v;
  write_json(manifest, dir / "manifest.json");
}

std::unique_ptr<NodeClassifier> LoadedModel::classifier() const {
  if (kind == "gcn") return std::make_unique<GcnClassifier>(gcn);
  return std::make_unique<IdeaClassifier>(idea);
}

LoadedModel load_checkpoint(const fs::path& dir) {
  if (!fs::exists(dir / "manifest.json") || !fs::exists(dir / "checkpoint.bin")) {
    throw MissingCheckpoint("no checkpoint in " + dir.string());
  }
  LoadedModel out;
  out.manifest = read_json(dir / "manifest.json");
  out.kind = out.manifest.at("kind").get<std::string>();
  const Json& a = out.manifest.at("architecture");
  if (out.kind == "idea") {
    ModelShape s;
    s.input_dim = a.at("input_dim").get<Index>();
    s.hidden_dim = a.at("hidden_dim").get<Index>();
    s.latent_dim = a.at("latent_dim").get<Index>();
    s.domain_hidden_dim = a.at("domain_hidden_dim").get<Index>();
    s.num_classes = a.at("num_classes").get<Index>();
    s.num_domains = a.at("num_domains").get<Index>();
    std::mt19937_64 unused(0);
    out.idea = IdeaModel::zeros_like(IdeaModel::initialize(s, unused));
    read_binary(parameter_views(out.idea), dir / "checkpoint.bin");
  } else if (out.kind == "gcn") {
    out.gcn.trunk.conv1 = Linear::zeros(a.at("input_dim").get<Index>(), a.at("hidden_dim").get<Index>());
    out.gcn.trunk.conv2 = Linear::zeros(a.at("hidden_dim").get<Index>(), a.at("num_classes").get<Index>());
    read_binary(parameter_views(out.gcn), dir / "checkpoint.bin");
  } else {
    throw Error("unknown checkpoint kind '" + out.kind + "'");
  }
  return out;
}

void write_metrics_csv(const std::vector<EpochMetrics>& history, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,L_P,L_I,L_E,L_D,val_accuracy\n";
  for (const auto& m : history) {
    out << m.epoch << ',' << format_real(m.losses.predictive) << ',' << format_real(m.losses.node_invariance) << ','
        << format_real(m.losses.structure_invariance) << ',' << format_real(m.domain_loss) << ','
        << format_real(m.val_accuracy) << '\n';
  }
}

}  // namespace idea
