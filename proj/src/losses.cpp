#include "idea/losses.hpp"

#include <algorithm>

namespace idea {

namespace {

constexpr Real kMinDomainWeight = 1e-6;

void check_labels(const Matrix& probs, const LabelVector& labels) {
  if (labels.size() != probs.rows()) throw Error("label count does not match probability rows");
}

Real row_loss(const Matrix& probs, const LabelVector& labels, NodeId i) {
  if (i < 0 || i >= probs.rows()) throw Error("row " + std::to_string(i) + " out of range");
  const int y = labels[i];
  if (y < 0 || y >= probs.cols()) throw Error("label " + std::to_string(y) + " of row " + std::to_string(i) +
                                              " out of range");
  return -std::log(std::max(probs(i, y), kProbabilityClamp));
}

Real invariance(const Matrix& probs_g, const Matrix& probs_gd, const LabelVector& labels,
                std::span<const NodeId> subset, Real alpha) {
  if (subset.empty()) throw Error("empty subset");
  if (alpha < 0) throw Error("alpha must be nonnegative");
  if (probs_g.rows() != probs_gd.rows() || probs_g.cols() != probs_gd.cols()) throw Error("probability shapes differ");
  check_labels(probs_g, labels);
  Real sum = 0;
  for (NodeId i : subset) {
    const Real lg = row_loss(probs_g, labels, i);
    const Real lgd = row_loss(probs_gd, labels, i);
    sum += lgd + alpha * (lg - lgd);
  }
  return sum / static_cast<Real>(subset.size());
}

/// d PCC(a, b) / d a.
Vector pcc_gradient_first(const Vector& a, const Vector& b) {
  const Vector ac = a.array() - a.mean();
  const Vector bc = b.array() - b.mean();
  const Real na = ac.norm();
  const Real nb = bc.norm();
  if (na == 0 || nb == 0) return Vector::Zero(a.size());
  const Real r = ac.dot(bc) / (na * nb);
  return bc / (na * nb) - r * ac / (na * na);
}

}  // namespace

Vector cross_entropy_per_row(const Matrix& probs, const LabelVector& labels) {
  check_labels(probs, labels);
  Vector out(probs.rows());
  for (Index i = 0; i < probs.rows(); ++i) out[i] = row_loss(probs, labels, i);
  return out;
}

Matrix cross_entropy_logit_gradient(const Matrix& probs, const LabelVector& labels, const Vector& weights) {
  check_labels(probs, labels);
  Matrix d = Matrix::Zero(probs.rows(), probs.cols());
  for (Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[i];
    if (weights[i] == 0 || probs(i, y) < kProbabilityClamp) continue;
    d.row(i) = weights[i] * probs.row(i);
    d(i, y) -= weights[i];
  }
  return d;
}

Real predictive_loss(const Matrix& probs, const LabelVector& labels, std::span<const NodeId> subset) {
  if (subset.empty()) throw Error("predictive_loss: empty subset");
  check_labels(probs, labels);
  Real sum = 0;
  for (NodeId i : subset) sum += row_loss(probs, labels, i);
  return sum / static_cast<Real>(subset.size());
}

Real node_invariance_loss(const Matrix& probs_g, const Matrix& probs_gd, const LabelVector& labels,
                          std::span<const NodeId> subset, Real alpha) {
  return invariance(probs_g, probs_gd, labels, subset, alpha);
}

Real structure_invariance_loss(const Matrix& probs_g_nbr, const Matrix& probs_gd_nbr, const LabelVector& labels,
                               std::span<const NodeId> subset, Real alpha) {
  return invariance(probs_g_nbr, probs_gd_nbr, labels, subset, alpha);
}

LossBreakdown total_loss(Real predictive, Real node_invariance, Real structure_invariance, Real alpha) {
  LossBreakdown b;
  b.predictive = predictive;
  b.node_invariance = node_invariance;
  b.structure_invariance = structure_invariance;
  b.total = predictive + node_invariance + structure_invariance;
  b.alpha = alpha;
  return b;
}

LossBreakdown total_loss(const Matrix& probs_g, const Matrix& probs_gd, const Matrix& probs_g_nbr,
                         const Matrix& probs_gd_nbr, const LabelVector& labels, std::span<const NodeId> subset,
                         Real alpha) {
  return total_loss(predictive_loss(probs_g, labels, subset),
                    node_invariance_loss(probs_g, probs_gd, labels, subset, alpha),
                    structure_invariance_loss(probs_g_nbr, probs_gd_nbr, labels, subset, alpha), alpha);
}

Real domain_diversity_loss(const Matrix& z, const Matrix& probs_g, const LabelVector& labels, const Matrix& soft,
                           Matrix* d_soft) {
  const Index n = z.rows();
  const Index num_domains = soft.cols();
  if (num_domains < 2) throw Error("domain_diversity_loss: need at least two domains");
  if (soft.rows() != n || probs_g.rows() != n) throw Error("domain_diversity_loss: row counts differ");
  check_labels(probs_g, labels);

  Vector residual(n);
  for (Index i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || y >= probs_g.cols()) throw Error("domain_diversity_loss: label out of range");
    residual[i] = probs_g(i, y) - 1;
  }
  const Matrix scaled = z.array().colwise() * residual.array();

  const RowVector weight = soft.colwise().sum();
  std::vector<Index> live;
  std::vector<Vector> r(static_cast<std::size_t>(num_domains));
  std::vector<Vector> rho(static_cast<std::size_t>(num_domains));
  for (Index d = 0; d < num_domains; ++d) {
    if (weight[d] < kMinDomainWeight) continue;
    live.push_back(d);
    r[d] = scaled.transpose() * soft.col(d) / weight[d];
    rho[d] = z.transpose() * soft.col(d) / weight[d];
  }

  Real loss = 0;
  for (Index a : live) {
    for (Index b : live) {
      if (a != b) loss += pearson_correlation(r[a], rho[b]);
    }
  }

  if (d_soft) {
    d_soft->setZero(n, num_domains);
    for (Index d : live) {
      Vector dr = Vector::Zero(z.cols());
      Vector drho = Vector::Zero(z.cols());
      for (Index other : live) {
        if (other == d) continue;
        dr += pcc_gradient_first(r[d], rho[other]);
        drho += pcc_gradient_first(rho[d], r[other]);
      }
      // r^D and rho^D are weighted means: d mean / d w_i = (x_i - mean) / W.
      const Vector from_r = (scaled.rowwise() - r[d].transpose()) * dr;
      const Vector from_rho = (z.rowwise() - rho[d].transpose()) * drho;
      d_soft->col(d) = (from_r + from_rho) / weight[d];
    }
  }
  return loss;
}

}  // namespace idea
