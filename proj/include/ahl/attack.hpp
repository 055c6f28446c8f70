#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ahl/importance.hpp"
#include "ahl/model.hpp"
#include "ahl/structured_mask.hpp"

namespace ahl {

enum class UnitRanking {
  gradient,            // most negative d loss / d mask first
  attention_score,     // highest attention probability first
  gradient_magnitude,  // largest |d loss / d mask| first
};

std::string to_string(UnitRanking r);
UnitRanking unit_ranking_from_string(const std::string& s);

struct AttackConfig {
  double alpha = 0.01;
  int l_max = 1;
  int h_max = 1;
  UnitRanking ranking = UnitRanking::gradient;
  double gradient_epsilon = 1e-12;
  bool accumulate = true;
  bool refresh_gradients = false;
  std::optional<long> query_budget;
  std::uint64_t seed = 0;  // random baseline only

  // l_max = N_L, h_max = N_H.
  static AttackConfig full_scale(const ModelConfig& m, double alpha = 0.01);
  // l_max = N_L / 2, h_max = N_H / 2 (at least 1).
  static AttackConfig half_scale(const ModelConfig& m, double alpha = 0.01);
  void validate(const ModelConfig& m) const;
};

enum class AttackStatus { success, fail, skipped };

std::string to_string(AttackStatus s);

struct TraceEntry {
  int layer = 0;
  int head = 0;
  int cells_masked = 0;
  int safeguard_hits = 0;
  int prediction = 0;
  double gold_prob = 0.0;
};

struct AttackResult {
  AttackStatus status = AttackStatus::skipped;
  StructuredMask final_mask;
  long candidate_queries = 0;
  long scoring_queries = 0;
  long gradient_queries = 0;
  HammingDistance hamming;
  double wall_time_s = 0.0;
  double clean_gold_prob = 0.0;
  std::vector<TraceEntry> trace;
  // Every candidate mask in query order; filled only when requested.
  std::vector<StructuredMask> candidates;

  bool success() const { return status == AttackStatus::success; }
};

// Cells of head (layer, head) in attack order. Gradient ranking falls back to
// attention scores when every |grad| in the head is below gradient_epsilon.
std::vector<Cell> rank_units(const ForwardTrace& trace, int layer, int head, UnitRanking ranking,
                             double gradient_epsilon = 1e-12);

struct AttackOptions {
  bool keep_candidates = false;
};

// Greedy search over importance-ranked layers and heads. Returns status
// skipped when the clean prediction is already wrong.
AttackResult hack_attend(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                         const AttackConfig& cfg, const AttackOptions& opts = {});

// Same loop shape with random layer order, head order and cells.
AttackResult random_baseline(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                             const AttackConfig& cfg, const AttackOptions& opts = {});

}  // namespace ahl
