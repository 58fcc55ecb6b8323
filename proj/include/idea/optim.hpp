#pragma once

#include "idea/nn.hpp"

namespace idea {

struct AdamOptions {
  Real learning_rate = 1e-2;
  Real beta1 = 0.9;
  Real beta2 = 0.999;
  Real epsilon = 1e-8;
  Real weight_decay = 0;  // L2 added to the gradient of decaying blocks
};

/// Adam over a fixed list of parameter blocks. Gradients are passed as views
/// with the same layout as the parameters.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamOptions options) : options_(options) {}

  void step(const std::vector<ParameterView>& params, const std::vector<ParameterView>& grads);
  long steps() const { return t_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  long t_ = 0;
  std::vector<Vector> m_;
  std::vector<Vector> v_;
};

}  // namespace idea
