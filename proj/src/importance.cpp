#include "ahl/importance.hpp"

#include <algorithm>

#include "ahl/errors.hpp"

namespace ahl {

namespace {

template <typename Score>
bool more_important(const Score& a, const Score& b, int ia, int ib) {
  if (a.flipped != b.flipped) return a.flipped;
  if (a.prob_drop != b.prob_drop) return a.prob_drop > b.prob_drop;
  return ia < ib;
}

struct Probe {
  bool flipped;
  double prob_drop;
};

Probe probe(const TransformerModel& model, std::span<const int> tokens, int gold, double clean_prob,
            const HeadGate& gate, QueryCounter* counter) {
  Prediction p = predict(model, tokens, nullptr, &gate, gold);
  if (counter) ++counter->scoring;
  return {p.predicted_class != gold, clean_prob - *p.gold_prob};
}

}  // namespace

std::vector<LayerScore> score_layers(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                                     double clean_gold_prob, QueryCounter* counter) {
  const auto& c = model.config();
  std::vector<LayerScore> scores;
  scores.reserve(c.num_layers);
  for (int i = 0; i < c.num_layers; ++i) {
    HeadGate gate = HeadGate::all_open(c.num_layers, c.num_heads);
    gate.close_layer(i);
    const Probe r = probe(model, tokens, gold_label, clean_gold_prob, gate, counter);
    scores.push_back({i, r.flipped, r.prob_drop});
  }
  std::stable_sort(scores.begin(), scores.end(),
                   [](const LayerScore& a, const LayerScore& b) { return more_important(a, b, a.layer, b.layer); });
  return scores;
}

std::vector<LayerScore> score_layers(const TransformerModel& model, std::span<const int> tokens, int gold_label) {
  return score_layers(model, tokens, gold_label, predict_gold_prob(model, tokens, nullptr, nullptr, gold_label));
}

std::vector<HeadScore> score_heads(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                                   int layer, double clean_gold_prob, QueryCounter* counter) {
  const auto& c = model.config();
  if (layer < 0 || layer >= c.num_layers) throw ContractError("score_heads: layer " + std::to_string(layer) + " out of range");
  std::vector<HeadScore> scores;
  scores.reserve(c.num_heads);
  for (int j = 0; j < c.num_heads; ++j) {
    HeadGate gate = HeadGate::all_open(c.num_layers, c.num_heads);
    gate.set(layer, j, false);
    const Probe r = probe(model, tokens, gold_label, clean_gold_prob, gate, counter);
    scores.push_back({layer, j, r.flipped, r.prob_drop});
  }
  std::stable_sort(scores.begin(), scores.end(),
                   [](const HeadScore& a, const HeadScore& b) { return more_important(a, b, a.head, b.head); });
  return scores;
}

std::vector<HeadScore> score_heads(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                                   int layer) {
  return score_heads(model, tokens, gold_label, layer,
                     predict_gold_prob(model, tokens, nullptr, nullptr, gold_label));
}

}  // namespace ahl
