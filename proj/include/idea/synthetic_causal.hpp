#pragma once

#include "idea/data_io.hpp"
#include "idea/types.hpp"

#include <random>

namespace idea {

/// Per-domain law of the non-causal block:
/// N = mix * C + offset + leak * eps / sigma + noise.
/// `leak` ties N to the label noise, so N predicts Y beyond C in a
/// domain-dependent way while (C, Y) keeps one distribution everywhere.
struct DomainShift {
  Matrix mix;     // noncausal x causal
  Vector offset;  // noncausal
  Vector leak;    // noncausal
};

/// Y = C gamma + eps with eps ~ N(0, noise_std^2); the representation is
/// rho = psi [C; N] with psi square and invertible.
struct LinearSCM {
  Vector gamma;
  Real noise_std = 0.5;
  Real noncausal_noise_std = 0.5;
  Matrix psi;
  std::vector<DomainShift> domains;

  Index causal_dim() const { return gamma.size(); }
  Index noncausal_dim() const { return psi.rows() - gamma.size(); }
  Index representation_dim() const { return psi.rows(); }

  /// Weights w with rho w = C gamma, i.e. psi^T w = [gamma; 0].
  Vector causal_weights() const;
  /// Throws unless psi is square, full rank and the domains match its shape.
  void validate() const;
};

struct LinearScmOptions {
  int causal_dim = 3;
  int noncausal_dim = 3;
  int num_domains = 10;
  Real noise_std = 0.5;
  Real noncausal_noise_std = 0.5;
  Real leak_scale = 2;  // std of the leak coefficients
  bool orthogonal_psi = true;  // identity when false
};

/// Random gamma ~ N(0, I), orthogonal psi, and per-domain shifts with
/// standard-normal mix and offset.
LinearSCM make_linear_scm(const LinearScmOptions& options, std::uint64_t seed);

struct DomainSample {
  Matrix rho;  // m x d_r
  Vector y;
  int domain = 0;
};

/// C ~ N(0, I), eps, then N from the domain's shift.
DomainSample generate_domain_data(const LinearSCM& scm, int domain, Index m, std::mt19937_64& rng);

struct InvariantFitOptions {
  int rank = 3;  // dimension of the invariant subspace
  std::vector<Real> penalties{10, 100, 1000};  // continuation schedule
  int restarts = 16;
  int max_iterations = 2000;
  Real gradient_tolerance = 1e-9;
  std::uint64_t seed = 0;
};

struct InvariantFit {
  Vector weights;
  Matrix projection;  // rank x d_r, orthonormal rows
  Real objective = 0;
};

/// Minimises mean squared risk plus penalty * sum_D ||U (S_D w - t_D)||^2
/// over an orthonormal projection U and w = U^T omega, where S_D, t_D are the
/// second moments of domain D. omega is solved in closed form for each U and
/// U by BFGS from several random starts.
InvariantFit fit_invariant_defender(const std::vector<DomainSample>& samples, const InvariantFitOptions& options);

/// Pooled least squares over all samples.
Vector fit_erm(const std::vector<DomainSample>& samples);

struct DefenderReport {
  std::vector<Real> risks;  // one per evaluated domain
  Real spread = 0;          // max - min risk
  Real mean_risk = 0;
  Real weight_error = 0;     // L-infinity distance to the causal weights
  Real causal_error = 0;     // ||(psi^T w)_causal - gamma||
  Real noncausal_norm = 0;   // ||(psi^T w)_noncausal||

  Json to_json() const;
};

/// Risks on fresh samples of `domains`.
DefenderReport verify_invariant_defender(const Vector& weights, const LinearSCM& scm, const std::vector<int>& domains,
                                         Index m, std::mt19937_64& rng);

struct SyntheticCheckOptions {
  LinearScmOptions scm;
  int train_domains = 5;  // the remaining domains are held out
  Index samples_per_domain = 10000;
  InvariantFitOptions fit;
  std::uint64_t seed = 7;
  Real weight_tolerance = 0.05;
  Real spread_ratio = 0.2;
};

struct SyntheticCheckReport {
  DefenderReport invariant;
  DefenderReport erm;
  DefenderReport truth;
  Vector invariant_weights;
  Vector erm_weights;
  Vector causal_weights;
  bool weights_pass = false;
  bool spread_pass = false;

  Json to_json() const;
};

/// Generates the instance, fits both predictors on the training domains and
/// scores them on the held-out ones.
SyntheticCheckReport run_synthetic_check(const SyntheticCheckOptions& options);

}  // namespace idea
