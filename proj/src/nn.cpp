#include "idea/nn.hpp"

#include "idea/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace idea {

namespace {

constexpr Real kProbabilityFloor = 1e-12;

Matrix softplus(const Matrix& x) {
  return x.unaryExpr([](Real v) { return std::max(v, Real(0)) + std::log1p(std::exp(-std::abs(v))); });
}

Matrix sigmoid(const Matrix& x) {
  return x.unaryExpr([](Real v) {
    if (v >= 0) return Real(1) / (Real(1) + std::exp(-v));
    const Real e = std::exp(v);
    return e / (Real(1) + e);
  });
}

void check_rows(const Matrix& m, Index rows, const char* what) {
  if (m.rows() != rows) {
    throw Error(std::string(what) + ": expected " + std::to_string(rows) + " rows, got " + std::to_string(m.rows()));
  }
}

/// Mean clamped cross-entropy of rows `nodes`; optionally d(logits) for all rows.
void check_width(const Matrix& m, Index cols, const char* what) {
  if (m.cols() != cols)
    throw Error(std::string(what) + ": expected " + std::to_string(cols) + " columns, got " + std::to_string(m.cols()));
}

Real node_cross_entropy(const Matrix& probs, std::span<const NodeId> nodes, const LabelVector& labels,
                        Matrix* d_logits) {
  if (nodes.empty()) throw Error("cross-entropy over an empty node set");
  if (d_logits) d_logits->setZero(probs.rows(), probs.cols());
  const Real scale = Real(1) / static_cast<Real>(nodes.size());
  Real total = 0;
  for (NodeId v : nodes) {
    if (v < 0 || v >= probs.rows()) throw Error("node " + std::to_string(v) + " out of range");
    const int y = labels[v];
    if (y < 0 || y >= probs.cols()) throw Error("node " + std::to_string(v) + " has no usable label");
    const Real p = probs(v, y);
    total += -std::log(std::max(p, kProbabilityFloor));
    if (d_logits && p >= kProbabilityFloor) {
      d_logits->row(v) += scale * probs.row(v);
      (*d_logits)(v, y) -= scale;
    }
  }
  return total * scale;
}

}  // namespace

// --- Linear ------------------------------------------------------------------

Matrix Linear::forward(const Matrix& x) const {
  check_width(x, in_dim(), "linear layer input");
  Matrix out = x * weight;
  out.rowwise() += bias;
  return out;
}

Matrix Linear::backward(const Matrix& x, const Matrix& d_out, Linear& grad) const {
  grad.weight.noalias() += x.transpose() * d_out;
  grad.bias += d_out.colwise().sum();
  return d_out * weight.transpose();
}

Linear Linear::zeros(Index in, Index out) {
  return {Matrix::Zero(in, out), RowVector::Zero(out)};
}

Linear Linear::glorot(Index in, Index out, std::mt19937_64& rng) {
  const Real bound = std::sqrt(Real(6) / static_cast<Real>(in + out));
  std::uniform_real_distribution<Real> uniform(-bound, bound);
  Linear layer = zeros(in, out);
  for (Index i = 0; i < in; ++i) {
    for (Index j = 0; j < out; ++j) layer.weight(i, j) = uniform(rng);
  }
  return layer;
}

void append_views(Linear& layer, const std::string& prefix, std::vector<ParameterView>& out, bool decays) {
  out.push_back({prefix + ".weight", layer.weight.data(), layer.weight.size(), decays});
  out.push_back({prefix + ".bias", layer.bias.data(), layer.bias.size(), false});
}

// --- Trunk -------------------------------------------------------------------

DropoutMasks make_dropout(Index rows, Index input_dim, Index hidden_dim, Real rate, std::mt19937_64& rng) {
  DropoutMasks masks;
  if (rate <= 0) return masks;
  if (rate >= 1) throw Error("dropout rate must be below 1");
  std::uniform_real_distribution<Real> uniform(0, 1);
  const Real keep = Real(1) / (Real(1) - rate);
  auto draw = [&](Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
      for (Index j = 0; j < cols; ++j) m(i, j) = uniform(rng) < rate ? Real(0) : keep;
    }
    return m;
  };
  masks.input = draw(input_dim);
  masks.hidden = draw(hidden_dim);
  return masks;
}

Real AdjacencyGradient::entry(Index i, Index j) const {
  Real sum = 0;
  for (std::size_t l = 0; l < left.size(); ++l) sum += left[l].row(i).dot(right[l].row(j));
  return sum;
}

Matrix AdjacencyGradient::dense() const {
  if (left.empty()) return {};
  Matrix out = Matrix::Zero(left.front().rows(), right.front().rows());
  for (std::size_t l = 0; l < left.size(); ++l) out.noalias() += left[l] * right[l].transpose();
  return out;
}

Matrix trunk_forward_projected(const GcnTrunk& trunk, const SparseMatrix& adj, const Matrix& projection1,
                               const Matrix& hidden_mask, TrunkCache* cache) {
  check_rows(projection1, adj.rows(), "trunk input");
  Matrix pre1 = adj * projection1;
  pre1.rowwise() += trunk.conv1.bias;
  Matrix hidden = pre1.cwiseMax(Real(0));
  if (hidden_mask.size() > 0) hidden = hidden.cwiseProduct(hidden_mask);
  Matrix projection2 = hidden * trunk.conv2.weight;
  Matrix output = adj * projection2;
  output.rowwise() += trunk.conv2.bias;
  if (cache) {
    cache->projection1 = projection1;
    cache->pre1 = std::move(pre1);
    cache->hidden = std::move(hidden);
    cache->projection2 = std::move(projection2);
    cache->output = output;
  }
  return output;
}

Matrix trunk_forward(const GcnTrunk& trunk, const SparseMatrix& adj, const Matrix& features,
                     const DropoutMasks* dropout, TrunkCache* cache) {
  const bool drop = dropout && dropout->input.size() > 0;
  Matrix input = drop ? Matrix(features.cwiseProduct(dropout->input)) : features;
  check_width(input, trunk.conv1.in_dim(), "trunk features");
  Matrix projection1 = input * trunk.conv1.weight;
  static const Matrix kNoMask;
  Matrix out = trunk_forward_projected(trunk, adj, projection1, dropout ? dropout->hidden : kNoMask, cache);
  if (cache) cache->input = std::move(input);
  return out;
}

Matrix trunk_backward(const GcnTrunk& trunk, const SparseMatrix& adj, const TrunkCache& cache, const Matrix& d_output,
                      const DropoutMasks* dropout, GcnTrunk& grad, Matrix* d_features, AdjacencyGradient* d_adj) {
  grad.conv2.bias += d_output.colwise().sum();
  Matrix d_projection2 = adj.transpose() * d_output;
  grad.conv2.weight.noalias() += cache.hidden.transpose() * d_projection2;
  Matrix d_hidden = d_projection2 * trunk.conv2.weight.transpose();
  if (dropout && dropout->hidden.size() > 0) d_hidden = d_hidden.cwiseProduct(dropout->hidden);
  Matrix d_pre1 = (cache.pre1.array() > 0).select(d_hidden, Matrix::Zero(d_hidden.rows(), d_hidden.cols()));
  grad.conv1.bias += d_pre1.colwise().sum();
  Matrix d_projection1 = adj.transpose() * d_pre1;
  if (cache.input.size() > 0) grad.conv1.weight.noalias() += cache.input.transpose() * d_projection1;
  if (d_features) {
    *d_features = d_projection1 * trunk.conv1.weight.transpose();
    if (dropout && dropout->input.size() > 0) *d_features = d_features->cwiseProduct(dropout->input);
  }
  if (d_adj) {
    d_adj->left.push_back(d_output);
    d_adj->right.push_back(cache.projection2);
    d_adj->left.push_back(d_pre1);
    d_adj->right.push_back(cache.projection1);
  }
  return d_projection1;
}

// --- IDEA model --------------------------------------------------------------

IdeaModel IdeaModel::initialize(const ModelShape& shape, std::mt19937_64& rng) {
  if (shape.input_dim <= 0 || shape.num_classes <= 0 || shape.num_domains <= 0) {
    throw Error("model shape needs positive input, class and domain counts");
  }
  IdeaModel m;
  m.encoder.trunk.conv1 = Linear::glorot(shape.input_dim, shape.hidden_dim, rng);
  m.encoder.trunk.conv2 = Linear::glorot(shape.hidden_dim, shape.hidden_dim, rng);
  m.encoder.mean_head = Linear::glorot(shape.hidden_dim, shape.latent_dim, rng);
  m.encoder.scale_head = Linear::glorot(shape.hidden_dim, shape.latent_dim, rng);
  m.encoder.scale_head.bias.setConstant(shape.scale_bias_init);
  m.classifier.linear = Linear::glorot(shape.latent_dim, shape.num_classes, rng);
  m.domain_classifier.linear = Linear::glorot(shape.latent_dim + shape.num_domains, shape.num_classes, rng);
  m.domain_classifier.num_domains = shape.num_domains;
  m.domain_learner.hidden = Linear::glorot(shape.latent_dim, shape.domain_hidden_dim, rng);
  m.domain_learner.output = Linear::glorot(shape.domain_hidden_dim, shape.num_domains, rng);
  return m;
}

IdeaModel IdeaModel::zeros_like(const IdeaModel& model) {
  auto z = [](const Linear& l) { return Linear::zeros(l.in_dim(), l.out_dim()); };
  IdeaModel m;
  m.encoder.trunk.conv1 = z(model.encoder.trunk.conv1);
  m.encoder.trunk.conv2 = z(model.encoder.trunk.conv2);
  m.encoder.mean_head = z(model.encoder.mean_head);
  m.encoder.scale_head = z(model.encoder.scale_head);
  m.classifier.linear = z(model.classifier.linear);
  m.domain_classifier.linear = z(model.domain_classifier.linear);
  m.domain_classifier.num_domains = model.domain_classifier.num_domains;
  m.domain_learner.hidden = z(model.domain_learner.hidden);
  m.domain_learner.output = z(model.domain_learner.output);
  return m;
}

ModelShape IdeaModel::shape() const {
  ModelShape s;
  s.input_dim = encoder.trunk.conv1.in_dim();
  s.hidden_dim = encoder.trunk.conv1.out_dim();
  s.latent_dim = encoder.latent_dim();
  s.domain_hidden_dim = domain_learner.hidden.out_dim();
  s.num_classes = num_classes();
  s.num_domains = num_domains();
  return s;
}

std::vector<ParameterView> encoder_views(EncoderParams& encoder) {
  std::vector<ParameterView> views;
  append_views(encoder.trunk.conv1, "encoder.conv1", views, true);
  append_views(encoder.trunk.conv2, "encoder.conv2", views, true);
  append_views(encoder.mean_head, "encoder.mean_head", views, true);
  append_views(encoder.scale_head, "encoder.scale_head", views, true);
  return views;
}

std::vector<ParameterView> domain_learner_views(DomainLearnerParams& learner) {
  std::vector<ParameterView> views;
  append_views(learner.hidden, "domain_learner.hidden", views, true);
  append_views(learner.output, "domain_learner.output", views, true);
  return views;
}

std::vector<ParameterView> parameter_views(IdeaModel& model) {
  std::vector<ParameterView> views = encoder_views(model.encoder);
  append_views(model.classifier.linear, "classifier", views, true);
  append_views(model.domain_classifier.linear, "domain_classifier", views, true);
  for (ParameterView& v : domain_learner_views(model.domain_learner)) views.push_back(std::move(v));
  return views;
}

Vector flatten(const std::vector<ParameterView>& views) {
  Index total = 0;
  for (const auto& v : views) total += v.size;
  Vector out(total);
  Index offset = 0;
  for (const auto& v : views) {
    out.segment(offset, v.size) = Eigen::Map<const Vector>(v.data, v.size);
    offset += v.size;
  }
  return out;
}

void unflatten(const std::vector<ParameterView>& views, const Vector& values) {
  Index offset = 0;
  for (const auto& v : views) {
    if (offset + v.size > values.size()) throw Error("unflatten: too few values");
    Eigen::Map<Vector>(v.data, v.size) = values.segment(offset, v.size);
    offset += v.size;
  }
  if (offset != values.size()) throw Error("unflatten: too many values");
}

// --- Encoder -----------------------------------------------------------------

EncoderOutput encode(const EncoderParams& params, const SparseMatrix& adj, const Matrix& features, const Matrix& noise,
                     const DropoutMasks* dropout, EncoderCache* cache) {
  TrunkCache local;
  TrunkCache* trunk_cache = cache ? &cache->trunk : &local;
  const Matrix trunk = trunk_forward(params.trunk, adj, features, dropout, cache ? trunk_cache : nullptr);
  EncoderOutput out;
  out.mu = params.mean_head.forward(trunk);
  Matrix scale_pre = params.scale_head.forward(trunk);
  out.sigma = softplus(scale_pre);
  if (noise.rows() != out.mu.rows() || noise.cols() != out.mu.cols()) {
    throw Error("encode: noise must be " + std::to_string(out.mu.rows()) + "x" + std::to_string(out.mu.cols()));
  }
  out.z = out.mu + noise.cwiseProduct(out.sigma);
  if (cache) {
    cache->scale_pre = std::move(scale_pre);
    cache->noise = noise;
  }
  return out;
}

EncoderOutput encode(const EncoderParams& params, const SparseMatrix& adj, const Matrix& features,
                     std::mt19937_64& rng) {
  return encode(params, adj, features, standard_normal(features.rows(), params.latent_dim(), rng));
}

void encode_backward(const EncoderParams& params, const SparseMatrix& adj, const EncoderOutput& out,
                     const EncoderCache& cache, const Matrix& d_z, const DropoutMasks* dropout, EncoderParams& grad,
                     Matrix* d_features, AdjacencyGradient* d_adj) {
  (void)out;
  const Matrix& trunk = cache.trunk.output;
  const Matrix d_scale_pre = d_z.cwiseProduct(cache.noise).cwiseProduct(sigmoid(cache.scale_pre));
  Matrix d_trunk = params.mean_head.backward(trunk, d_z, grad.mean_head);
  d_trunk += params.scale_head.backward(trunk, d_scale_pre, grad.scale_head);
  trunk_backward(params.trunk, adj, cache.trunk, d_trunk, dropout, grad.trunk, d_features, d_adj);
}

// --- Heads -------------------------------------------------------------------

Matrix classifier_logits(const ClassifierParams& params, const Matrix& z) { return params.linear.forward(z); }

Matrix classify(const ClassifierParams& params, const Matrix& z) { return softmax_rows(classifier_logits(params, z)); }

Matrix one_hot_argmax(const Matrix& scores) {
  Matrix out = Matrix::Zero(scores.rows(), scores.cols());
  for (Index i = 0; i < scores.rows(); ++i) {
    Index best = 0;
    for (Index j = 1; j < scores.cols(); ++j) {
      if (scores(i, j) > scores(i, best)) best = j;
    }
    if (scores.cols() > 0) out(i, best) = 1;
  }
  return out;
}

Matrix domain_classifier_input(const Matrix& z, const Matrix& domains) {
  check_rows(domains, z.rows(), "domain one-hot");
  Matrix input(z.rows(), z.cols() + domains.cols());
  input << z, domains;
  return input;
}

Matrix domain_classifier_logits(const DomainClassifierParams& params, const Matrix& z, const Matrix& hard_domains) {
  if (hard_domains.cols() != params.num_domains) throw Error("domain one-hot width does not match the classifier");
  return params.linear.forward(domain_classifier_input(z, hard_domains));
}

Matrix classify_with_domain(const DomainClassifierParams& params, const Matrix& z, const DomainAssignment& domains) {
  return softmax_rows(domain_classifier_logits(params, z, domains.hard));
}

Matrix domain_logits(const DomainLearnerParams& params, const Matrix& z, DomainLearnerCache* cache) {
  Matrix pre = params.hidden.forward(z);
  Matrix hidden = pre.cwiseMax(Real(0));
  Matrix logits = params.output.forward(hidden);
  if (cache) {
    cache->pre_hidden = std::move(pre);
    cache->hidden = std::move(hidden);
  }
  return logits;
}

DomainAssignment assign_domains(const DomainLearnerParams& params, const Matrix& z) {
  DomainAssignment a;
  a.soft = softmax_rows(domain_logits(params, z));
  a.hard = one_hot_argmax(a.soft);
  return a;
}

void domain_logits_backward(const DomainLearnerParams& params, const Matrix& z, const DomainLearnerCache& cache,
                            const Matrix& d_logits, DomainLearnerParams& grad) {
  Matrix d_hidden = params.output.backward(cache.hidden, d_logits, grad.output);
  d_hidden = (cache.pre_hidden.array() > 0).select(d_hidden, Matrix::Zero(d_hidden.rows(), d_hidden.cols()));
  params.hidden.backward(z, d_hidden, grad.hidden);
}

// --- Classifier adapters -----------------------------------------------------

Real NodeClassifier::loss(const SparseMatrix& adj, const Matrix& features, std::span<const NodeId> nodes,
                          const LabelVector& labels, Matrix* d_features, AdjacencyGradient* d_adj) const {
  Matrix d_projection;
  const Real value =
      loss_projected(adj, input_projection(features), nodes, labels, d_features ? &d_projection : nullptr, d_adj);
  if (d_features) *d_features = projection_to_features(d_projection);
  return value;
}

Matrix IdeaClassifier::input_projection(const Matrix& features) const {
  check_width(features, model_.encoder.trunk.conv1.in_dim(), "classifier features");
  return features * model_.encoder.trunk.conv1.weight;
}

Matrix IdeaClassifier::projection_to_features(const Matrix& d_projection) const {
  return d_projection * model_.encoder.trunk.conv1.weight.transpose();
}

Matrix IdeaClassifier::predict_projected(const SparseMatrix& adj, const Matrix& projection) const {
  const Matrix trunk = trunk_forward_projected(model_.encoder.trunk, adj, projection, Matrix(), nullptr);
  return classify(model_.classifier, model_.encoder.mean_head.forward(trunk));
}

Real IdeaClassifier::loss_projected(const SparseMatrix& adj, const Matrix& projection, std::span<const NodeId> nodes,
                                    const LabelVector& labels, Matrix* d_projection, AdjacencyGradient* d_adj) const {
  TrunkCache cache;
  const Matrix trunk = trunk_forward_projected(model_.encoder.trunk, adj, projection, Matrix(), &cache);
  const Matrix mu = model_.encoder.mean_head.forward(trunk);
  const Matrix probs = classify(model_.classifier, mu);
  if (!d_projection && !d_adj) return node_cross_entropy(probs, nodes, labels, nullptr);
  Matrix d_logits;
  const Real value = node_cross_entropy(probs, nodes, labels, &d_logits);
  const Matrix d_mu = d_logits * model_.classifier.linear.weight.transpose();
  const Matrix d_trunk = d_mu * model_.encoder.mean_head.weight.transpose();
  GcnTrunk scratch{Linear::zeros(0, model_.encoder.trunk.conv1.out_dim()),
                   Linear::zeros(model_.encoder.trunk.conv2.in_dim(), model_.encoder.trunk.conv2.out_dim())};
  Matrix d_proj = trunk_backward(model_.encoder.trunk, adj, cache, d_trunk, nullptr, scratch, nullptr, d_adj);
  if (d_projection) *d_projection = std::move(d_proj);
  return value;
}

Matrix IdeaClassifier::embed(const SparseMatrix& adj, const Matrix& features) const {
  const Matrix trunk = trunk_forward(model_.encoder.trunk, adj, features, nullptr, nullptr);
  return model_.encoder.mean_head.forward(trunk);
}

GcnModel GcnModel::initialize(Index input_dim, Index hidden_dim, Index num_classes, std::mt19937_64& rng) {
  GcnModel m;
  m.trunk.conv1 = Linear::glorot(input_dim, hidden_dim, rng);
  m.trunk.conv2 = Linear::glorot(hidden_dim, num_classes, rng);
  return m;
}

std::vector<ParameterView> parameter_views(GcnModel& model) {
  std::vector<ParameterView> views;
  append_views(model.trunk.conv1, "conv1", views, true);
  append_views(model.trunk.conv2, "conv2", views, true);
  return views;
}

Matrix GcnClassifier::input_projection(const Matrix& features) const {
  check_width(features, model_.trunk.conv1.in_dim(), "classifier features");
  return features * model_.trunk.conv1.weight;
}

Matrix GcnClassifier::projection_to_features(const Matrix& d_projection) const {
  return d_projection * model_.trunk.conv1.weight.transpose();
}

Matrix GcnClassifier::predict_projected(const SparseMatrix& adj, const Matrix& projection) const {
  return softmax_rows(trunk_forward_projected(model_.trunk, adj, projection, Matrix(), nullptr));
}

Real GcnClassifier::loss_projected(const SparseMatrix& adj, const Matrix& projection, std::span<const NodeId> nodes,
                                   const LabelVector& labels, Matrix* d_projection, AdjacencyGradient* d_adj) const {
  TrunkCache cache;
  const Matrix probs = softmax_rows(trunk_forward_projected(model_.trunk, adj, projection, Matrix(), &cache));
  if (!d_projection && !d_adj) return node_cross_entropy(probs, nodes, labels, nullptr);
  Matrix d_logits;
  const Real value = node_cross_entropy(probs, nodes, labels, &d_logits);
  GcnTrunk scratch{Linear::zeros(0, model_.trunk.conv1.out_dim()),
                   Linear::zeros(model_.trunk.conv2.in_dim(), model_.trunk.conv2.out_dim())};
  Matrix d_proj = trunk_backward(model_.trunk, adj, cache, d_logits, nullptr, scratch, nullptr, d_adj);
  if (d_projection) *d_projection = std::move(d_proj);
  return value;
}

Matrix GcnClassifier::embed(const SparseMatrix& adj, const Matrix& features) const {
  // Hidden layer of the baseline.
  TrunkCache cache;
  trunk_forward(model_.trunk, adj, features, nullptr, &cache);
  return cache.pre1.cwiseMax(Real(0));
}

// --- Gradient checking -------------------------------------------------------

GradientCheckResult gradient_check(const std::function<Real(const Vector&)>& loss,
                                   const std::function<Vector(const Vector&)>& gradient, const Vector& params,
                                   Real step, Index max_checks, std::uint64_t seed) {
  GradientCheckResult result;
  result.analytic = gradient(params);
  if (result.analytic.size() != params.size()) throw Error("gradient_check: gradient has the wrong size");
  result.numeric = Vector::Zero(params.size());

  std::vector<Index> indices(static_cast<std::size_t>(params.size()));
  std::iota(indices.begin(), indices.end(), Index(0));
  if (max_checks > 0 && max_checks < params.size()) {
    std::mt19937_64 rng = substream(seed, "gradient_check");
    shuffle(indices, rng);
    indices.resize(static_cast<std::size_t>(max_checks));
    std::sort(indices.begin(), indices.end());
  }

  Vector probe = params;
  for (Index k : indices) {
    const Real original = probe[k];
    probe[k] = original + step;
    const Real plus = loss(probe);
    probe[k] = original - step;
    const Real minus = loss(probe);
    probe[k] = original;
    if (!std::isfinite(plus) || !std::isfinite(minus)) throw Error("gradient_check: non-finite loss");
    const Real numeric = (plus - minus) / (2 * step);
    result.numeric[k] = numeric;
    const Real a = result.analytic[k];
    const Real err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), Real(1e-6)});
    if (err > result.max_relative_error || result.worst_index < 0) {
      result.max_relative_error = std::max(result.max_relative_error, err);
      result.worst_index = k;
    }
  }
  return result;
}

}  // namespace idea
