#pragma once

#include <optional>
#include <span>
#include <vector>

#include "ahl/model.hpp"

namespace ahl {

// Forward passes issued on behalf of one attack, split by purpose.
struct QueryCounter {
  long candidate = 0;  // perturbed-mask queries
  long scoring = 0;    // layer/head importance probes
  long gradient = 0;   // gradient-bearing forwards
};

struct LayerScore {
  int layer = 0;
  bool flipped = false;     // gating the whole layer changed the prediction
  double prob_drop = 0.0;   // p_clean(y) - p_gated(y)
};

struct HeadScore {
  int layer = 0;
  int head = 0;
  bool flipped = false;
  double prob_drop = 0.0;
};

// Gates every head of each layer in turn (N_L probes). Result order: flipped
// layers first, then by descending prob_drop, ties to the lower index.
std::vector<LayerScore> score_layers(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                                     double clean_gold_prob, QueryCounter* counter = nullptr);
std::vector<LayerScore> score_layers(const TransformerModel& model, std::span<const int> tokens, int gold_label);

// Gates each head of `layer` alone (N_H probes), ordered like score_layers.
std::vector<HeadScore> score_heads(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                                   int layer, double clean_gold_prob, QueryCounter* counter = nullptr);
std::vector<HeadScore> score_heads(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                                   int layer);

}  // namespace ahl
