#pragma once

#include <vector>

#include "ahl/tensor.hpp"

namespace ahl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a fixed list of parameter tensors. Moment buffers are indexed by
// position, so the same parameter order must be passed to every step().
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Applies one update from the accumulated grads (scaled by grad_scale) and
  // zeroes them.
  void step(std::vector<Tensor>& params, double grad_scale = 1.0);

  long steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace ahl
