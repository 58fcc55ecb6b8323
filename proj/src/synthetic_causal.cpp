#include "idea/synthetic_causal.hpp"

#include "idea/rng.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <algorithm>
#include <functional>
#include <limits>

namespace idea {

namespace {

struct Moments {
  Matrix second;  // rho^T rho / m
  Vector cross;   // rho^T y / m
  Real label = 0; // y^T y / m
};

std::vector<Moments> domain_moments(const std::vector<DomainSample>& samples) {
  std::vector<Moments> out;
  for (const auto& s : samples) {
    const Real inv = Real(1) / static_cast<Real>(s.rho.rows());
    out.push_back({(s.rho.transpose() * s.rho) * inv, (s.rho.transpose() * s.y) * inv, s.y.squaredNorm() * inv});
  }
  return out;
}

Matrix orthonormal_rows(const Matrix& v) {
  const Eigen::HouseholderQR<Matrix> qr(v.transpose());
  return (qr.householderQ() * Matrix::Identity(v.cols(), v.rows())).transpose();
}

/// Objective of the penalised linear fit for a fixed projection.
class InvariantObjective {
 public:
  explicit InvariantObjective(std::vector<Moments> moments) : moments_(std::move(moments)) {
    const Index d = moments_.front().second.rows();
    mean_second_ = Matrix::Zero(d, d);
    mean_cross_ = Vector::Zero(d);
    for (const auto& m : moments_) {
      mean_second_ += m.second;
      mean_cross_ += m.cross;
      mean_label_ += m.label;
    }
    const Real inv = Real(1) / static_cast<Real>(moments_.size());
    mean_second_ *= inv;
    mean_cross_ *= inv;
    mean_label_ *= inv;
  }

  /// Closed-form minimiser over omega with w = U^T omega.
  Vector weights(const Matrix& u, Real penalty) const {
    Matrix lhs = u * mean_second_ * u.transpose();
    Vector rhs = u * mean_cross_;
    for (const auto& m : moments_) {
      const Matrix proj = u * m.second * u.transpose();
      lhs.noalias() += penalty * proj.transpose() * proj;
      rhs.noalias() += penalty * proj.transpose() * (u * m.cross);
    }
    return u.transpose() * lhs.ldlt().solve(rhs);
  }

  Real value(const Matrix& u, const Vector& w, Real penalty) const {
    Real v = w.dot(mean_second_ * w) - 2 * w.dot(mean_cross_) + mean_label_;
    for (const auto& m : moments_) v += penalty * (u * (m.second * w - m.cross)).squaredNorm();
    return v;
  }

  Real profile(const Matrix& u, Real penalty) const { return value(u, weights(u, penalty), penalty); }

 private:
  std::vector<Moments> moments_;
  Matrix mean_second_;
  Vector mean_cross_;
  Real mean_label_ = 0;
};

Vector central_gradient(const std::function<Real(const Vector&)>& f, const Vector& x) {
  Vector g(x.size());
  Vector probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const Real h = 1e-6 * std::max(Real(1), std::abs(x[i]));
    probe[i] = x[i] + h;
    const Real up = f(probe);
    probe[i] = x[i] - h;
    const Real down = f(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

/// BFGS with Armijo backtracking on a finite-difference gradient.
Vector bfgs(const std::function<Real(const Vector&)>& f, Vector x, int max_iterations, Real tolerance) {
  const Index n = x.size();
  Matrix inv_hessian = Matrix::Identity(n, n);
  Real fx = f(x);
  Vector g = central_gradient(f, x);
  int stalled = 0;
  for (int it = 0; it < max_iterations && g.lpNorm<Eigen::Infinity>() > tolerance; ++it) {
    Vector dir = -inv_hessian * g;
    if (g.dot(dir) >= 0) {
      inv_hessian.setIdentity();
      dir = -g;
    }
    Real step = 1;
    Real next = f(x + dir);
    while (next > fx + 1e-4 * step * g.dot(dir) && step > 1e-12) {
      step *= 0.5;
      next = f(x + step * dir);
    }
    if (step <= 1e-12) break;
    const Vector s = step * dir;
    x += s;
    const Vector g_next = central_gradient(f, x);
    const Vector y = g_next - g;
    const Real sy = s.dot(y);
    if (sy > 1e-14) {
      const Real r = 1 / sy;
      const Matrix left = Matrix::Identity(n, n) - r * s * y.transpose();
      inv_hessian = left * inv_hessian * left.transpose() + r * s * s.transpose();
    }
    stalled = fx - next <= 1e-15 * (1 + std::abs(fx)) ? stalled + 1 : 0;
    fx = next;
    g = g_next;
    if (stalled >= 3) break;
  }
  return x;
}

Json vector_json(const Vector& v) {
  Json out = Json::array();
  for (Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

}  // namespace

Vector LinearSCM::causal_weights() const {
  Vector coeff = Vector::Zero(representation_dim());
  coeff.head(causal_dim()) = gamma;
  return psi.transpose().fullPivLu().solve(coeff);
}

void LinearSCM::validate() const {
  if (gamma.size() == 0) throw Error("linear SCM needs at least one causal dimension");
  if (psi.rows() != psi.cols() || psi.rows() < gamma.size()) {
    throw Error("psi must be square with at least as many rows as causal dimensions");
  }
  if (Eigen::FullPivLU<Matrix>(psi).rank() != psi.rows()) throw Error("psi must be invertible");
  if (!(noise_std >= 0) || !(noncausal_noise_std >= 0)) throw Error("noise scales must be nonnegative");
  if (!gamma.allFinite() || !psi.allFinite()) throw Error("linear SCM parameters must be finite");
  const Index dn = noncausal_dim();
  for (const auto& d : domains) {
    if (d.mix.rows() != dn || d.mix.cols() != causal_dim() || d.offset.size() != dn || d.leak.size() != dn) {
      throw Error("domain shift shape does not match the SCM");
    }
  }
}

LinearSCM make_linear_scm(const LinearScmOptions& options, std::uint64_t seed) {
  if (options.causal_dim < 1 || options.noncausal_dim < 0 || options.num_domains < 1) {
    throw Error("invalid linear SCM dimensions");
  }
  auto rng = substream(seed, "scm");
  const Index dc = options.causal_dim;
  const Index dn = options.noncausal_dim;
  LinearSCM scm;
  scm.gamma = standard_normal(dc, 1, rng);
  scm.noise_std = options.noise_std;
  scm.noncausal_noise_std = options.noncausal_noise_std;
  if (options.orthogonal_psi) {
    const Eigen::HouseholderQR<Matrix> qr(standard_normal(dc + dn, dc + dn, rng));
    scm.psi = qr.householderQ() * Matrix::Identity(dc + dn, dc + dn);
  } else {
    scm.psi = Matrix::Identity(dc + dn, dc + dn);
  }
  for (int d = 0; d < options.num_domains; ++d) {
    DomainShift shift;
    shift.mix = standard_normal(dn, dc, rng);
    shift.offset = standard_normal(dn, 1, rng);
    shift.leak = options.leak_scale * standard_normal(dn, 1, rng);
    scm.domains.push_back(std::move(shift));
  }
  scm.validate();
  return scm;
}

DomainSample generate_domain_data(const LinearSCM& scm, int domain, Index m, std::mt19937_64& rng) {
  scm.validate();
  if (domain < 0 || domain >= static_cast<int>(scm.domains.size())) {
    throw Error("domain " + std::to_string(domain) + " is not defined by the SCM");
  }
  if (m < scm.representation_dim() + 1) throw Error("need at least d_r + 1 samples per domain");
  const DomainShift& shift = scm.domains[static_cast<std::size_t>(domain)];
  const Index dc = scm.causal_dim();
  const Index dn = scm.noncausal_dim();
  const Matrix c = standard_normal(m, dc, rng);
  const Vector eps = scm.noise_std * standard_normal(m, 1, rng);
  Matrix latent(m, dc + dn);
  latent.leftCols(dc) = c;
  if (dn > 0) {
    Matrix n = c * shift.mix.transpose();
    n.rowwise() += shift.offset.transpose();
    if (scm.noise_std > 0) n.noalias() += (eps / scm.noise_std) * shift.leak.transpose();
    n += scm.noncausal_noise_std * standard_normal(m, dn, rng);
    latent.rightCols(dn) = n;
  }
  return {latent * scm.psi.transpose(), c * scm.gamma + eps, domain};
}

InvariantFit fit_invariant_defender(const std::vector<DomainSample>& samples, const InvariantFitOptions& options) {
  if (samples.size() < 2) throw Error("the invariant fit needs at least two training domains");
  const Index d = samples.front().rho.cols();
  for (const auto& s : samples) {
    if (s.rho.cols() != d || s.rho.rows() != s.y.size() || s.rho.rows() == 0) throw Error("inconsistent domain sample");
    if (!s.rho.allFinite() || !s.y.allFinite()) throw Error("domain sample is not finite");
  }
  if (options.rank < 1 || options.rank > d) throw Error("rank must lie in [1, d_r]");
  if (options.penalties.empty() || options.restarts < 1) throw Error("invariant fit needs penalties and restarts");
  const InvariantObjective objective(domain_moments(samples));
  const Real final_penalty = options.penalties.back();

  InvariantFit best;
  best.objective = std::numeric_limits<Real>::infinity();
  if (options.rank == d) {
    best.projection = Matrix::Identity(d, d);
    best.weights = objective.weights(best.projection, final_penalty);
    best.objective = objective.value(best.projection, best.weights, final_penalty);
    return best;
  }

  auto rng = substream(options.seed, "invariant_fit");
  const Index rank = options.rank;
  for (int r = 0; r < options.restarts; ++r) {
    Vector x = standard_normal(rank * d, 1, rng);
    for (Real penalty : options.penalties) {
      const auto f = [&](const Vector& v) {
        return objective.profile(orthonormal_rows(v.reshaped(rank, d)), penalty);
      };
      x = bfgs(f, x, options.max_iterations, options.gradient_tolerance);
    }
    const Matrix u = orthonormal_rows(x.reshaped(rank, d));
    const Vector w = objective.weights(u, final_penalty);
    const Real value = objective.value(u, w, final_penalty);
    if (value < best.objective) best = {w, u, value};
  }
  return best;
}

Vector fit_erm(const std::vector<DomainSample>& samples) {
  if (samples.empty()) throw Error("no samples to fit");
  const Index d = samples.front().rho.cols();
  Matrix gram = Matrix::Zero(d, d);
  Vector cross = Vector::Zero(d);
  for (const auto& s : samples) {
    gram.noalias() += s.rho.transpose() * s.rho;
    cross.noalias() += s.rho.transpose() * s.y;
  }
  return gram.ldlt().solve(cross);
}

Json DefenderReport::to_json() const {
  return {{"risks", risks},
          {"spread", spread},
          {"mean_risk", mean_risk},
          {"weight_error", weight_error},
          {"causal_error", causal_error},
          {"noncausal_norm", noncausal_norm}};
}

DefenderReport verify_invariant_defender(const Vector& weights, const LinearSCM& scm, const std::vector<int>& domains,
                                         Index m, std::mt19937_64& rng) {
  if (weights.size() != scm.representation_dim()) throw Error("weight vector does not match the SCM");
  DefenderReport report;
  for (int d : domains) {
    const DomainSample s = generate_domain_data(scm, d, m, rng);
    report.risks.push_back((s.rho * weights - s.y).squaredNorm() / static_cast<Real>(m));
  }
  if (!report.risks.empty()) {
    const auto [lo, hi] = std::minmax_element(report.risks.begin(), report.risks.end());
    report.spread = *hi - *lo;
    for (Real r : report.risks) report.mean_risk += r;
    report.mean_risk /= static_cast<Real>(report.risks.size());
  }
  const Vector coeff = scm.psi.transpose() * weights;
  report.weight_error = (weights - scm.causal_weights()).lpNorm<Eigen::Infinity>();
  report.causal_error = (coeff.head(scm.causal_dim()) - scm.gamma).norm();
  report.noncausal_norm = coeff.tail(scm.noncausal_dim()).norm();
  return report;
}

Json SyntheticCheckReport::to_json() const {
  return {{"invariant", invariant.to_json()},
          {"erm", erm.to_json()},
          {"ground_truth", truth.to_json()},
          {"invariant_weights", vector_json(invariant_weights)},
          {"erm_weights", vector_json(erm_weights)},
          {"causal_weights", vector_json(causal_weights)},
          {"spread_ratio", erm.spread > 0 ? invariant.spread / erm.spread : 0.0},
          {"weights_pass", weights_pass},
          {"spread_pass", spread_pass}};
}

SyntheticCheckReport run_synthetic_check(const SyntheticCheckOptions& options) {
  const int total = options.scm.num_domains;
  if (options.train_domains < 2 || options.train_domains >= total) {
    throw Error("need at least two training domains and one held-out domain");
  }
  const LinearSCM scm = make_linear_scm(options.scm, options.seed);
  auto sample_rng = substream(options.seed, "scm_samples");
  std::vector<DomainSample> train;
  for (int d = 0; d < options.train_domains; ++d) {
    train.push_back(generate_domain_data(scm, d, options.samples_per_domain, sample_rng));
  }
  std::vector<int> held_out;
  for (int d = options.train_domains; d < total; ++d) held_out.push_back(d);

  InvariantFitOptions fit = options.fit;
  fit.seed = options.seed;
  SyntheticCheckReport report;
  report.invariant_weights = fit_invariant_defender(train, fit).weights;
  report.erm_weights = fit_erm(train);
  report.causal_weights = scm.causal_weights();

  // All three predictors are scored on the same held-out draws.
  const auto eval_rng = substream(options.seed, "scm_eval");
  auto score = [&](const Vector& w) {
    auto rng = eval_rng;
    return verify_invariant_defender(w, scm, held_out, options.samples_per_domain, rng);
  };
  report.invariant = score(report.invariant_weights);
  report.erm = score(report.erm_weights);
  report.truth = score(report.causal_weights);
  report.weights_pass = report.invariant.weight_error <= options.weight_tolerance;
  report.spread_pass = report.invariant.spread <= options.spread_ratio * report.erm.spread;
  return report;
}

}  // namespace idea
