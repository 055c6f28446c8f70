#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "ahl/tensor.hpp"

namespace ahl {

// Central finite differences of a scalar function with respect to every
// element of `input`. The input's values are perturbed in place and restored.
std::vector<double> numeric_gradient(const std::function<double()>& loss, Tensor& input, double h = 1e-5);

struct GradCheckResult {
  std::size_t checked = 0;   // elements with |numeric| above the floor
  std::size_t failed = 0;
  double max_rel_error = 0.0;
  bool ok() const { return failed == 0; }
  double pass_fraction() const { return checked ? 1.0 - double(failed) / double(checked) : 1.0; }
};

// Element-wise relative comparison, skipping elements with |numeric| <= floor.
GradCheckResult compare_gradients(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                  double rel_tol, double floor = 1e-8);

}  // namespace ahl
