#pragma once

#include <vector>

#include "steerq/tensor.hpp"

namespace steerq {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Classic L2: weight_decay * p is added to the gradient before the moments.
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig config);

  /// One update from the gradients currently stored on the parameters.
  void step();
  void zero_grad();

  long step_count() const { return steps_; }
  const AdamConfig& config() const { return config_; }
  const std::vector<Tensor>& params() const { return params_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  long steps_ = 0;
};

}  // namespace steerq
