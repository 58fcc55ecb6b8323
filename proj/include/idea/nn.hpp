#pragma once

#include "idea/types.hpp"

#include <functional>
#include <random>
#include <span>
#include <string>

namespace idea {

/// Affine map x -> x W + b applied row-wise.
struct Linear {
  Matrix weight;  // in x out
  RowVector bias;  // out

  Index in_dim() const { return weight.rows(); }
  Index out_dim() const { return weight.cols(); }
  Matrix forward(const Matrix& x) const;
  /// Accumulates dW, db for upstream `d_out` and returns d_in.
  Matrix backward(const Matrix& x, const Matrix& d_out, Linear& grad) const;

  static Linear zeros(Index in, Index out);
  /// Glorot-uniform weights, zero bias.
  static Linear glorot(Index in, Index out, std::mt19937_64& rng);
};

/// Named, contiguous parameter block. Views stay valid while the owning
/// object is alive and not resized.
struct ParameterView {
  std::string name;
  Real* data = nullptr;
  Index size = 0;
  bool decays = false;  // subject to weight decay
};

void append_views(Linear& layer, const std::string& prefix, std::vector<ParameterView>& out, bool decays);

/// Two graph-convolution layers: adj (dropout(relu(adj X W1 + b1))) W2 + b2.
struct GcnTrunk {
  Linear conv1;
  Linear conv2;
};

/// Pre-scaled dropout masks (entries 0 or 1/(1-p)); empty matrices mean no dropout.
struct DropoutMasks {
  Matrix input;
  Matrix hidden;
};
DropoutMasks make_dropout(Index rows, Index input_dim, Index hidden_dim, Real rate, std::mt19937_64& rng);

struct TrunkCache {
  Matrix input;        // features after input dropout
  Matrix projection1;  // input * W1
  Matrix pre1;         // adj * projection1 + b1
  Matrix hidden;       // relu(pre1) after hidden dropout
  Matrix projection2;  // hidden * W2
  Matrix output;       // adj * projection2 + b2
};

/// dL/d(adj) as a sum of rank-h products: sum_l left[l] * right[l]^T.
/// Entry (i, j) is the sensitivity to the normalised adjacency entry.
struct AdjacencyGradient {
  std::vector<Matrix> left;
  std::vector<Matrix> right;

  Real entry(Index i, Index j) const;
  Matrix dense() const;
};

/// Forward pass starting from a precomputed input projection X W1
/// (dropout on the input is the caller's business).
Matrix trunk_forward_projected(const GcnTrunk& trunk, const SparseMatrix& adj, const Matrix& projection1,
                               const Matrix& hidden_mask, TrunkCache* cache);
Matrix trunk_forward(const GcnTrunk& trunk, const SparseMatrix& adj, const Matrix& features,
                     const DropoutMasks* dropout, TrunkCache* cache);
/// Accumulates parameter gradients into `grad`. Returns d(projection1);
/// `d_features`, if given, receives the gradient w.r.t. the undropped features.
Matrix trunk_backward(const GcnTrunk& trunk, const SparseMatrix& adj, const TrunkCache& cache, const Matrix& d_output,
                      const DropoutMasks* dropout, GcnTrunk& grad, Matrix* d_features, AdjacencyGradient* d_adj);

// --- IDEA components -------------------------------------------------------

/// Encoder h: trunk then Gaussian heads; sigma = softplus(scale head).
struct EncoderParams {
  GcnTrunk trunk;
  Linear mean_head;
  Linear scale_head;

  Index latent_dim() const { return mean_head.out_dim(); }
};

/// Classifier g: q(y|z).
struct ClassifierParams {
  Linear linear;
};

/// Domain-based classifier g_d: q_d(y|z,d) on the concatenation [z, one-hot d].
struct DomainClassifierParams {
  Linear linear;
  Index num_domains = 0;
};

/// Domain learner s: two-layer perceptron producing domain logits.
struct DomainLearnerParams {
  Linear hidden;
  Linear output;

  Index num_domains() const { return output.out_dim(); }
};

struct ModelShape {
  Index input_dim = 0;
  Index hidden_dim = 64;
  Index latent_dim = 32;
  Index domain_hidden_dim = 32;
  Index num_classes = 0;
  Index num_domains = 10;
  Real scale_bias_init = -2.0;
};

struct IdeaModel {
  EncoderParams encoder;
  ClassifierParams classifier;
  DomainClassifierParams domain_classifier;
  DomainLearnerParams domain_learner;

  static IdeaModel initialize(const ModelShape& shape, std::mt19937_64& rng);
  static IdeaModel zeros_like(const IdeaModel& model);
  ModelShape shape() const;
  Index num_classes() const { return classifier.linear.out_dim(); }
  Index num_domains() const { return domain_learner.num_domains(); }
};

std::vector<ParameterView> parameter_views(IdeaModel& model);
std::vector<ParameterView> encoder_views(EncoderParams& encoder);
std::vector<ParameterView> domain_learner_views(DomainLearnerParams& learner);
Vector flatten(const std::vector<ParameterView>& views);
void unflatten(const std::vector<ParameterView>& views, const Vector& values);

struct EncoderOutput {
  Matrix z;
  Matrix mu;
  Matrix sigma;
};

struct EncoderCache {
  TrunkCache trunk;
  Matrix scale_pre;
  Matrix noise;
};

/// z = mu + noise * sigma elementwise. `noise` must be n x latent_dim.
EncoderOutput encode(const EncoderParams& params, const SparseMatrix& adj, const Matrix& features, const Matrix& noise,
                     const DropoutMasks* dropout = nullptr, EncoderCache* cache = nullptr);
/// Draws the noise standard-normal from `rng`.
EncoderOutput encode(const EncoderParams& params, const SparseMatrix& adj, const Matrix& features, std::mt19937_64& rng);
/// Backward pass for upstream dL/dz. Gradients accumulate into `grad`.
void encode_backward(const EncoderParams& params, const SparseMatrix& adj, const EncoderOutput& out,
                     const EncoderCache& cache, const Matrix& d_z, const DropoutMasks* dropout, EncoderParams& grad,
                     Matrix* d_features = nullptr, AdjacencyGradient* d_adj = nullptr);

/// Row-wise softmax with max-shift.
template <typename Derived>
MatrixX<typename Derived::Scalar> softmax_rows(const Eigen::MatrixBase<Derived>& logits) {
  using Scalar = typename Derived::Scalar;
  MatrixX<Scalar> out = logits.colwise() - logits.rowwise().maxCoeff();
  out = out.array().exp();
  out.array().colwise() /= out.rowwise().sum().array();
  return out;
}

/// Softmax of g(z).
Matrix classify(const ClassifierParams& params, const Matrix& z);
Matrix classifier_logits(const ClassifierParams& params, const Matrix& z);

struct DomainAssignment {
  Matrix soft;  // batch x |D|, rows sum to one
  Matrix hard;  // one-hot at the soft argmax, ties to the lowest index
};

/// One-hot of the row argmax (lowest index on ties).
Matrix one_hot_argmax(const Matrix& scores);
Matrix domain_classifier_input(const Matrix& z, const Matrix& domains);
Matrix classify_with_domain(const DomainClassifierParams& params, const Matrix& z, const DomainAssignment& domains);
Matrix domain_classifier_logits(const DomainClassifierParams& params, const Matrix& z, const Matrix& hard_domains);

struct DomainLearnerCache {
  Matrix pre_hidden;
  Matrix hidden;
};
Matrix domain_logits(const DomainLearnerParams& params, const Matrix& z, DomainLearnerCache* cache = nullptr);
DomainAssignment assign_domains(const DomainLearnerParams& params, const Matrix& z);
/// Accumulates parameter gradients for upstream dL/d(logits).
void domain_logits_backward(const DomainLearnerParams& params, const Matrix& z, const DomainLearnerCache& cache,
                            const Matrix& d_logits, DomainLearnerParams& grad);

// --- Classifiers as seen by attacks and evaluation --------------------------

/// A deterministic node classifier whose first layer is a feature
/// projection X W1 followed by propagation over the normalised adjacency.
/// Attacks edit either side of that product, so the interface exposes it.
class NodeClassifier {
 public:
  virtual ~NodeClassifier() = default;

  virtual int num_classes() const = 0;
  virtual Matrix input_projection(const Matrix& features) const = 0;
  /// d(features) from d(projection).
  virtual Matrix projection_to_features(const Matrix& d_projection) const = 0;
  virtual Matrix predict_projected(const SparseMatrix& adj, const Matrix& projection) const = 0;
  /// Mean clamped cross-entropy over `nodes`; fills the requested gradients.
  virtual Real loss_projected(const SparseMatrix& adj, const Matrix& projection, std::span<const NodeId> nodes,
                              const LabelVector& labels, Matrix* d_projection, AdjacencyGradient* d_adj) const = 0;
  /// Representation that is exported for visualisation.
  virtual Matrix embed(const SparseMatrix& adj, const Matrix& features) const = 0;

  Matrix predict(const SparseMatrix& adj, const Matrix& features) const {
    return predict_projected(adj, input_projection(features));
  }
  Real loss(const SparseMatrix& adj, const Matrix& features, std::span<const NodeId> nodes, const LabelVector& labels,
            Matrix* d_features = nullptr, AdjacencyGradient* d_adj = nullptr) const;
};

/// IDEA at test time: g(h^mu(x)).
class IdeaClassifier final : public NodeClassifier {
 public:
  explicit IdeaClassifier(const IdeaModel& model) : model_(model) {}

  int num_classes() const override { return static_cast<int>(model_.num_classes()); }
  Matrix input_projection(const Matrix& features) const override;
  Matrix projection_to_features(const Matrix& d_projection) const override;
  Matrix predict_projected(const SparseMatrix& adj, const Matrix& projection) const override;
  Real loss_projected(const SparseMatrix& adj, const Matrix& projection, std::span<const NodeId> nodes,
                      const LabelVector& labels, Matrix* d_projection, AdjacencyGradient* d_adj) const override;
  Matrix embed(const SparseMatrix& adj, const Matrix& features) const override;

 private:
  const IdeaModel& model_;
};

/// Plain two-layer graph-convolution baseline.
struct GcnModel {
  GcnTrunk trunk;

  static GcnModel initialize(Index input_dim, Index hidden_dim, Index num_classes, std::mt19937_64& rng);
};
std::vector<ParameterView> parameter_views(GcnModel& model);

class GcnClassifier final : public NodeClassifier {
 public:
  explicit GcnClassifier(const GcnModel& model) : model_(model) {}

  int num_classes() const override { return static_cast<int>(model_.trunk.conv2.out_dim()); }
  Matrix input_projection(const Matrix& features) const override;
  Matrix projection_to_features(const Matrix& d_projection) const override;
  Matrix predict_projected(const SparseMatrix& adj, const Matrix& projection) const override;
  Real loss_projected(const SparseMatrix& adj, const Matrix& projection, std::span<const NodeId> nodes,
                      const LabelVector& labels, Matrix* d_projection, AdjacencyGradient* d_adj) const override;
  Matrix embed(const SparseMatrix& adj, const Matrix& features) const override;

 private:
  const GcnModel& model_;
};

// --- Gradient checking ------------------------------------------------------

struct GradientCheckResult {
  Real max_relative_error = 0;
  Index worst_index = -1;
  Vector analytic;
  Vector numeric;  // only the checked entries are filled
};

/// Central differences at `step` against `gradient(params)`, over all
/// parameters or a seeded sample of `max_checks` of them. The relative error
/// of an entry is |a - n| / max(|a|, |n|, 1e-6). Throws on a non-finite loss.
GradientCheckResult gradient_check(const std::function<Real(const Vector&)>& loss,
                                   const std::function<Vector(const Vector&)>& gradient, const Vector& params,
                                   Real step, Index max_checks = 0, std::uint64_t seed = 0);

}  // namespace idea
