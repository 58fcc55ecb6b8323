#pragma once

#include "idea/types.hpp"

#include <cmath>
#include <span>

namespace idea {

/// Probabilities are clamped to this floor before taking logs.
inline constexpr Real kProbabilityClamp = 1e-12;

struct LossBreakdown {
  Real predictive = 0;
  Real node_invariance = 0;
  Real structure_invariance = 0;
  Real total = 0;
  Real alpha = 0;
};

/// -log max(p_{i, labels[i]}, clamp) for every row i.
Vector cross_entropy_per_row(const Matrix& probs, const LabelVector& labels);

/// Gradient w.r.t. the softmax logits of sum_i weights[i] * CE_i. Rows whose
/// true-class probability sits below the clamp get zero gradient.
Matrix cross_entropy_logit_gradient(const Matrix& probs, const LabelVector& labels, const Vector& weights);

/// Mean cross-entropy over `subset` (row ids into probs/labels).
Real predictive_loss(const Matrix& probs, const LabelVector& labels, std::span<const NodeId> subset);

/// mean over subset of L(g_d) + alpha * (L(g) - L(g_d)).
Real node_invariance_loss(const Matrix& probs_g, const Matrix& probs_gd, const LabelVector& labels,
                          std::span<const NodeId> subset, Real alpha);

/// Same form as node_invariance_loss; row i holds predictions computed from
/// the sampled neighbour of node i (with node i's domain and label).
Real structure_invariance_loss(const Matrix& probs_g_nbr, const Matrix& probs_gd_nbr, const LabelVector& labels,
                               std::span<const NodeId> subset, Real alpha);

LossBreakdown total_loss(Real predictive, Real node_invariance, Real structure_invariance, Real alpha);
LossBreakdown total_loss(const Matrix& probs_g, const Matrix& probs_gd, const Matrix& probs_g_nbr,
                         const Matrix& probs_gd_nbr, const LabelVector& labels, std::span<const NodeId> subset,
                         Real alpha);

/// Sample Pearson correlation; 0 when either argument is constant.
template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar pearson_correlation(const Eigen::MatrixBase<DerivedA>& u,
                                              const Eigen::MatrixBase<DerivedB>& v) {
  using Scalar = typename DerivedA::Scalar;
  if (u.size() != v.size()) throw Error("pearson_correlation: length mismatch");
  if (u.size() < 2) throw Error("pearson_correlation: need at least two entries");
  const auto uc = (u.array() - u.mean()).matrix().eval();
  const auto vc = (v.array() - v.mean()).matrix().eval();
  const Scalar nu = uc.norm();
  const Scalar nv = vc.norm();
  if (nu == Scalar(0) || nv == Scalar(0)) return Scalar(0);
  const Scalar r = uc.dot(vc) / (nu * nv);
  return std::clamp(r, Scalar(-1), Scalar(1));
}

/// Sum over ordered domain pairs D != D' of PCC(r^D, rho^D'), where
/// r^D = sum_i w_iD (p_{i,y_i} - 1) z_i / W_D and rho^D = sum_i w_iD z_i / W_D.
/// Domains with W_D < 1e-6 are skipped. `d_soft`, when given, receives
/// dL/d(soft) with z and probs held fixed.
Real domain_diversity_loss(const Matrix& z, const Matrix& probs_g, const LabelVector& labels, const Matrix& soft,
                           Matrix* d_soft = nullptr);

}  // namespace idea
