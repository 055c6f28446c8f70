#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "ahl/adam.hpp"
#include "ahl/model.hpp"
#include "ahl/smoothing.hpp"
#include "ahl/tasks.hpp"

namespace ahl {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 5;
  std::uint64_t seed = 0;
  SmoothingConfig smoothing;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Missing keys keep their defaults; smoothing keys may be nested under
// "smoothing" or given flat.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double dev_accuracy = 0.0;
  double masked_fraction = 0.0;
};

struct TrainResult {
  std::vector<EpochStats> curve;
};

// Plain mini-batch update without attention masking.
double train_step(TransformerModel& model, std::span<const Example* const> batch, Adam& optimizer);

// Mini-batch Adam on cross entropy. Shuffling draws from a stream seeded by
// cfg.seed; smoothing masks draw from a second, independent stream.
TrainResult train(TransformerModel& model, std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& cfg);

// Accuracy with all-ones masks.
double evaluate_clean(const TransformerModel& model, std::span<const Example> examples);
// Accuracy with Bernoulli masks when smoothing.apply_at_eval is set.
double evaluate_clean(const TransformerModel& model, std::span<const Example> examples,
                      const SmoothingConfig& smoothing, std::uint64_t seed);

}  // namespace ahl
