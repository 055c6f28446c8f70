#pragma once

#include <span>
#include <vector>

#include "ahl/attack.hpp"
#include "ahl/tasks.hpp"

namespace ahl {

struct MeanHamming {
  double total_bits = 0.0;
  double per_matrix_avg = 0.0;
  double n_perturbed = 0.0;
};

struct Metrics {
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double asr = 0.0;                     // n_success / n_correct
  double mean_candidate_queries = 0.0;  // over attacked samples; the reported "# Query"
  double mean_success_queries = 0.0;    // over successful attacks
  double mean_scoring_queries = 0.0;    // over attacked samples
  MeanHamming mean_hamming;             // over successful attacks
  double mean_wall_time_s = 0.0;        // over attacked samples
  long n_samples = 0;
  long n_correct = 0;
  long n_success = 0;
};

// Successes per layer, bin 0 holding failures (layer -1); counts are
// normalized by the number of attacked samples.
struct LayerHistogram {
  std::vector<long> counts;         // size num_layers + 1
  std::vector<double> normalized;
};

// Aggregates per-sample results; skipped results are the initially
// misclassified samples.
Metrics compute_metrics(std::span<const AttackResult> results);
LayerHistogram layer_histogram(std::span<const AttackResult> results, int num_layers, bool by_last_entry);

enum class Attacker { hack_attend, random_baseline };

struct EvalOptions {
  Attacker attacker = Attacker::hack_attend;
  int threads = 1;
  bool keep_candidates = false;
};

struct Evaluation {
  Metrics metrics;
  std::vector<AttackResult> results;  // one per example, in input order
  LayerHistogram first_layer;
  LayerHistogram last_layer;
};

// Attacks every correctly classified example. Random-baseline seeds are
// derived from cfg.seed and the example index.
Evaluation evaluate_under_attack(const TransformerModel& model, std::span<const Example> examples,
                                 const AttackConfig& cfg, const EvalOptions& opts = {});

}  // namespace ahl
