#include "ahl/smoothing.hpp"

#include <cmath>

#include "ahl/errors.hpp"
#include "ahl/structured_mask.hpp"

namespace ahl {

std::string to_string(Resample r) { return r == Resample::per_batch ? "per_batch" : "per_example"; }

Resample resample_from_string(const std::string& s) {
  if (s == "per_batch") return Resample::per_batch;
  if (s == "per_example") return Resample::per_example;
  throw ContractError("unknown resample mode '" + s + "'");
}

void SmoothingConfig::validate() const {
  if (!(alpha_s >= 0.0 && alpha_s < 1.0)) throw ContractError("smoothing: alpha_s must lie in [0, 1)");
}

StepResult smoothed_step(TransformerModel& model, std::span<const Example* const> batch,
                         const SmoothingConfig& smoothing, Adam& optimizer, std::mt19937_64& rng) {
  smoothing.validate();
  if (batch.empty()) throw ContractError("smoothed_step: empty batch");
  const auto& c = model.config();
  StepResult r;
  std::uint64_t seed = smoothing.resample == Resample::per_batch ? rng() : 0;
  for (const Example* ex : batch) {
    if (smoothing.resample == Resample::per_example) seed = rng();
    const int n = static_cast<int>(effective_length(ex->tokens));
    Tape tape;
    Tensor loss;
    if (smoothing.alpha_s > 0.0) {
      const StructuredMask mask = sample_bernoulli(c.num_layers, c.num_heads, n, smoothing.alpha_s, seed);
      r.masked_cells += mask.count_zeros();
      r.total_cells += static_cast<std::size_t>(c.num_layers) * c.num_heads * n * n;
      loss = example_loss(tape, model, ex->tokens, ex->label, &mask);
    } else {
      r.total_cells += static_cast<std::size_t>(c.num_layers) * c.num_heads * n * n;
      loss = example_loss(tape, model, ex->tokens, ex->label);
    }
    if (!std::isfinite(loss.item())) throw DivergenceError("smoothed_step: non-finite loss");
    r.loss += loss.item();
    tape.backward(loss);
  }
  auto params = model.parameter_tensors();
  optimizer.step(params, 1.0 / static_cast<double>(batch.size()));
  r.loss /= static_cast<double>(batch.size());
  return r;
}

}  // namespace ahl
