#pragma once

#include <random>
#include <span>
#include <string>

#include "ahl/adam.hpp"
#include "ahl/model.hpp"
#include "ahl/tasks.hpp"

namespace ahl {

enum class Resample { per_batch, per_example };

std::string to_string(Resample r);
Resample resample_from_string(const std::string& s);

// Training-time Bernoulli masking of attention units.
struct SmoothingConfig {
  double alpha_s = 0.0;
  Resample resample = Resample::per_batch;
  bool apply_at_eval = false;

  void validate() const;
};

struct StepResult {
  double loss = 0.0;  // mean over the batch
  std::size_t masked_cells = 0;
  std::size_t total_cells = 0;
};

// One optimizer update on `batch` with freshly sampled attention masks.
// Draws exactly one seed from `rng` per batch (per_batch) or per example
// (per_example), whatever alpha_s is.
StepResult smoothed_step(TransformerModel& model, std::span<const Example* const> batch,
                         const SmoothingConfig& smoothing, Adam& optimizer, std::mt19937_64& rng);

}  // namespace ahl
