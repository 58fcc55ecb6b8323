#include "idea/optim.hpp"

#include <cmath>

namespace idea {

void Adam::step(const std::vector<ParameterView>& params, const std::vector<ParameterView>& grads) {
  if (params.size() != grads.size()) throw Error("Adam: parameter and gradient lists differ in length");
  if (m_.empty()) {
    for (const auto& p : params) {
      m_.push_back(Vector::Zero(p.size));
      v_.push_back(Vector::Zero(p.size));
    }
  }
  if (m_.size() != params.size()) throw Error("Adam: parameter list changed between steps");
  ++t_;
  const Real c1 = Real(1) - std::pow(options_.beta1, static_cast<Real>(t_));
  const Real c2 = Real(1) - std::pow(options_.beta2, static_cast<Real>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size != grads[k].size || params[k].size != m_[k].size()) {
      throw Error("Adam: size mismatch for " + params[k].name);
    }
    Eigen::Map<Vector> p(params[k].data, params[k].size);
    Vector g = Eigen::Map<const Vector>(grads[k].data, grads[k].size);
    if (params[k].decays && options_.weight_decay > 0) g += options_.weight_decay * p;
    m_[k] = options_.beta1 * m_[k] + (1 - options_.beta1) * g;
    v_[k] = options_.beta2 * v_[k] + (1 - options_.beta2) * g.cwiseAbs2();
    p.array() -= options_.learning_rate * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + options_.epsilon);
  }
}

}  // namespace idea
