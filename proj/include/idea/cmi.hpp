#pragma once

#include "idea/types.hpp"

#include <random>

namespace idea {

/// Explicit joint distribution p(y, d, z) over finite supports.
struct DiscreteJoint {
  int num_y = 0;
  int num_d = 0;
  int num_z = 0;
  std::vector<Real> p;  // index (y * num_d + d) * num_z + z

  Real operator()(int y, int d, int z) const { return p[static_cast<std::size_t>((y * num_d + d) * num_z + z)]; }
  Real& operator()(int y, int d, int z) { return p[static_cast<std::size_t>((y * num_d + d) * num_z + z)]; }

  /// Throws unless entries are nonnegative and sum to 1 within 1e-9.
  void validate() const;
};

/// Joint with flat-Dirichlet entries.
DiscreteJoint random_joint(int num_y, int num_d, int num_z, std::mt19937_64& rng);

/// Exact I(Y; D | Z) in nats by enumeration.
Real cmi_monte_carlo(const DiscreteJoint& joint);

struct VariationalFitOptions {
  int steps = 3000;
  Real learning_rate = 2.0;
};

/// Softmax tables q(y|z) and q_d(y|z,d) fitted by gradient descent on the
/// expected conditional cross-entropy, and the plug-in bound
/// E_p[log q_d(y|z,d) - log q(y|z)].
struct VariationalFit {
  Matrix q;    // num_z x num_y
  Matrix q_d;  // (num_z * num_d) x num_y, row z * num_d + d
  Real estimate = 0;
  Real kl_domain = 0;  // E_{z,d} KL[p(y|z,d) || q_d(y|z,d)]
};

VariationalFit fit_variational_bound(const DiscreteJoint& joint, const VariationalFitOptions& options = {});

}  // namespace idea
