#include "idea/cmi.hpp"

#include "idea/nn.hpp"

#include <cmath>

namespace idea {

void DiscreteJoint::validate() const {
  if (num_y <= 0 || num_d <= 0 || num_z <= 0) throw Error("joint: supports must be nonempty");
  if (p.size() != static_cast<std::size_t>(num_y * num_d * num_z)) throw Error("joint: table size mismatch");
  Real sum = 0;
  for (Real v : p) {
    if (!(v >= 0)) throw Error("joint: negative or non-finite probability");
    sum += v;
  }
  if (std::abs(sum - 1) > 1e-9) throw Error("joint: probabilities sum to " + std::to_string(sum));
}

DiscreteJoint random_joint(int num_y, int num_d, int num_z, std::mt19937_64& rng) {
  DiscreteJoint j{num_y, num_d, num_z, std::vector<Real>(static_cast<std::size_t>(num_y * num_d * num_z))};
  std::exponential_distribution<Real> draw(1.0);
  Real sum = 0;
  for (Real& v : j.p) sum += (v = draw(rng));
  for (Real& v : j.p) v /= sum;
  return j;
}

Real cmi_monte_carlo(const DiscreteJoint& joint) {
  joint.validate();
  const int ny = joint.num_y, nd = joint.num_d, nz = joint.num_z;
  Real total = 0;
  for (int z = 0; z < nz; ++z) {
    Real pz = 0;
    std::vector<Real> pyz(ny, 0), pdz(nd, 0);
    for (int y = 0; y < ny; ++y) {
      for (int d = 0; d < nd; ++d) {
        const Real v = joint(y, d, z);
        pz += v;
        pyz[y] += v;
        pdz[d] += v;
      }
    }
    if (pz <= 0) continue;
    for (int y = 0; y < ny; ++y) {
      for (int d = 0; d < nd; ++d) {
        const Real v = joint(y, d, z);
        if (v > 0) total += v * std::log(v * pz / (pyz[y] * pdz[d]));
      }
    }
  }
  return std::max(total, Real(0));
}

VariationalFit fit_variational_bound(const DiscreteJoint& joint, const VariationalFitOptions& options) {
  joint.validate();
  const int ny = joint.num_y, nd = joint.num_d, nz = joint.num_z;

  // Targets: conditionals p(y|z) and p(y|z,d) with their cell masses.
  Matrix target_q = Matrix::Zero(nz, ny);
  Matrix target_qd = Matrix::Zero(nz * nd, ny);
  for (int y = 0; y < ny; ++y) {
    for (int d = 0; d < nd; ++d) {
      for (int z = 0; z < nz; ++z) {
        target_q(z, y) += joint(y, d, z);
        target_qd(z * nd + d, y) += joint(y, d, z);
      }
    }
  }
  const Vector mass_q = target_q.rowwise().sum();
  const Vector mass_qd = target_qd.rowwise().sum();
  for (Index r = 0; r < target_q.rows(); ++r) {
    if (mass_q[r] > 0) target_q.row(r) /= mass_q[r];
  }
  for (Index r = 0; r < target_qd.rows(); ++r) {
    if (mass_qd[r] > 0) target_qd.row(r) /= mass_qd[r];
  }

  // Per-cell cross-entropy gradient w.r.t. logits is q - p.
  auto fit = [&](const Matrix& target) {
    Matrix logits = Matrix::Zero(target.rows(), target.cols());
    for (int step = 0; step < options.steps; ++step) {
      logits -= options.learning_rate * (softmax_rows(logits) - target);
    }
    return softmax_rows(logits);
  };

  VariationalFit out;
  out.q = fit(target_q);
  out.q_d = fit(target_qd);
  for (int y = 0; y < ny; ++y) {
    for (int d = 0; d < nd; ++d) {
      for (int z = 0; z < nz; ++z) {
        const Real v = joint(y, d, z);
        if (v <= 0) continue;
        const Index row = z * nd + d;
        out.estimate += v * (std::log(out.q_d(row, y)) - std::log(out.q(z, y)));
        out.kl_domain += v * (std::log(target_qd(row, y)) - std::log(out.q_d(row, y)));
      }
    }
  }
  return out;
}

}  // namespace idea
