#include "ahl/train.hpp"

#include <cmath>
#include <numeric>

#include "ahl/errors.hpp"

namespace ahl {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ContractError("train: learning_rate must be positive");
  if (batch_size <= 0) throw ContractError("train: batch_size must be positive");
  if (epochs <= 0) throw ContractError("train: epochs must be positive");
  smoothing.validate();
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"seed", c.seed},
          {"smoothing",
           {{"alpha_s", c.smoothing.alpha_s},
            {"resample", to_string(c.smoothing.resample)},
            {"apply_at_eval", c.smoothing.apply_at_eval}}}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  const nlohmann::json& s = j.contains("smoothing") ? j.at("smoothing") : j;
  c.smoothing.alpha_s = s.value("alpha_s", c.smoothing.alpha_s);
  if (s.contains("resample")) c.smoothing.resample = resample_from_string(s.at("resample").get<std::string>());
  c.smoothing.apply_at_eval = s.value("apply_at_eval", c.smoothing.apply_at_eval);
  return c;
}

double train_step(TransformerModel& model, std::span<const Example* const> batch, Adam& optimizer) {
  if (batch.empty()) throw ContractError("train_step: empty batch");
  double total = 0.0;
  for (const Example* ex : batch) {
    Tape tape;
    Tensor loss = example_loss(tape, model, ex->tokens, ex->label);
    if (!std::isfinite(loss.item())) throw DivergenceError("train_step: non-finite loss");
    total += loss.item();
    tape.backward(loss);
  }
  auto params = model.parameter_tensors();
  optimizer.step(params, 1.0 / static_cast<double>(batch.size()));
  return total / static_cast<double>(batch.size());
}

TrainResult train(TransformerModel& model, std::span<const Example> train_set, std::span<const Example> dev_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train: empty training set");
  Adam optimizer(AdamConfig{cfg.learning_rate});
  std::mt19937_64 shuffle_rng(cfg.seed);
  std::mt19937_64 smoothing_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);

  std::vector<const Example*> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = &train_set[i];

  TrainResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);
    double loss_sum = 0.0;
    std::size_t batches = 0, masked = 0, cells = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(cfg.batch_size), order.size() - start);
      std::span<const Example* const> batch(order.data() + start, len);
      double loss;
      if (cfg.smoothing.alpha_s > 0.0) {
        const StepResult r = smoothed_step(model, batch, cfg.smoothing, optimizer, smoothing_rng);
        loss = r.loss;
        masked += r.masked_cells;
        cells += r.total_cells;
      } else {
        loss = train_step(model, batch, optimizer);
      }
      if (!std::isfinite(loss)) throw DivergenceError("train: loss diverged in epoch " + std::to_string(epoch));
      loss_sum += loss;
      ++batches;
    }
    EpochStats s;
    s.epoch = epoch + 1;
    s.mean_loss = loss_sum / static_cast<double>(batches);
    s.dev_accuracy = dev_set.empty() ? 0.0 : evaluate_clean(model, dev_set);
    s.masked_fraction = cells ? static_cast<double>(masked) / static_cast<double>(cells) : 0.0;
    result.curve.push_back(s);
  }
  return result;
}

double evaluate_clean(const TransformerModel& model, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& ex : examples) correct += predict(model, ex.tokens).predicted_class == ex.label;
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double evaluate_clean(const TransformerModel& model, std::span<const Example> examples,
                      const SmoothingConfig& smoothing, std::uint64_t seed) {
  if (!smoothing.apply_at_eval || smoothing.alpha_s == 0.0) return evaluate_clean(model, examples);
  if (examples.empty()) return 0.0;
  const auto& c = model.config();
  std::mt19937_64 rng(seed);
  std::size_t correct = 0;
  for (const auto& ex : examples) {
    const int n = static_cast<int>(effective_length(ex.tokens));
    const StructuredMask mask = sample_bernoulli(c.num_layers, c.num_heads, n, smoothing.alpha_s, rng());
    correct += predict(model, ex.tokens, &mask).predicted_class == ex.label;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace ahl
