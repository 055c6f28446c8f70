#include "ahl/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "ahl/errors.hpp"

namespace ahl {

std::vector<double> numeric_gradient(const std::function<double()>& loss, Tensor& input, double h) {
  auto values = input.mutable_values();
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + h;
    const double up = loss();
    values[i] = saved - h;
    const double down = loss();
    values[i] = saved;
    out[i] = (up - down) / (2.0 * h);
  }
  return out;
}

GradCheckResult compare_gradients(const std::vector<double>& analytic, const std::vector<double>& numeric,
                                  double rel_tol, double floor) {
  if (analytic.size() != numeric.size()) throw DimensionError("compare_gradients: length mismatch");
  GradCheckResult r;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    if (std::abs(numeric[i]) <= floor) continue;
    ++r.checked;
    const double rel = std::abs(analytic[i] - numeric[i]) / std::abs(numeric[i]);
    r.max_rel_error = std::max(r.max_rel_error, rel);
    if (!(rel <= rel_tol)) ++r.failed;
  }
  return r;
}

}  // namespace ahl
