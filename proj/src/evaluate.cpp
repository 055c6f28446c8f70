#include "ahl/evaluate.hpp"

#include <atomic>
#include <thread>

#include "ahl/errors.hpp"

namespace ahl {

Metrics compute_metrics(std::span<const AttackResult> results) {
  Metrics m;
  m.n_samples = static_cast<long>(results.size());
  double queries = 0, success_queries = 0, scoring = 0, wall = 0;
  MeanHamming h;
  for (const auto& r : results) {
    if (r.status == AttackStatus::skipped) continue;
    ++m.n_correct;
    queries += static_cast<double>(r.candidate_queries);
    scoring += static_cast<double>(r.scoring_queries);
    wall += r.wall_time_s;
    if (r.success()) {
      ++m.n_success;
      success_queries += static_cast<double>(r.candidate_queries);
      h.total_bits += static_cast<double>(r.hamming.total_bits);
      h.per_matrix_avg += r.hamming.per_matrix_avg;
      h.n_perturbed += static_cast<double>(r.hamming.n_perturbed);
    }
  }
  if (m.n_samples) {
    m.clean_accuracy = static_cast<double>(m.n_correct) / static_cast<double>(m.n_samples);
    m.robust_accuracy = static_cast<double>(m.n_correct - m.n_success) / static_cast<double>(m.n_samples);
  }
  if (m.n_correct) {
    const auto nc = static_cast<double>(m.n_correct);
    m.asr = static_cast<double>(m.n_success) / nc;
    m.mean_candidate_queries = queries / nc;
    m.mean_scoring_queries = scoring / nc;
    m.mean_wall_time_s = wall / nc;
  }
  if (m.n_success) {
    const auto ns = static_cast<double>(m.n_success);
    m.mean_success_queries = success_queries / ns;
    m.mean_hamming = {h.total_bits / ns, h.per_matrix_avg / ns, h.n_perturbed / ns};
  }
  return m;
}

LayerHistogram layer_histogram(std::span<const AttackResult> results, int num_layers, bool by_last_entry) {
  LayerHistogram hist;
  hist.counts.assign(static_cast<std::size_t>(num_layers) + 1, 0);
  long attacked = 0;
  for (const auto& r : results) {
    if (r.status == AttackStatus::skipped) continue;
    ++attacked;
    if (!r.success() || r.trace.empty()) {
      ++hist.counts[0];
      continue;
    }
    const int layer = by_last_entry ? r.trace.back().layer : r.trace.front().layer;
    ++hist.counts[static_cast<std::size_t>(layer) + 1];
  }
  hist.normalized.assign(hist.counts.size(), 0.0);
  if (attacked)
    for (std::size_t i = 0; i < hist.counts.size(); ++i)
      hist.normalized[i] = static_cast<double>(hist.counts[i]) / static_cast<double>(attacked);
  return hist;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Evaluation evaluate_under_attack(const TransformerModel& model, std::span<const Example> examples,
                                 const AttackConfig& cfg, const EvalOptions& opts) {
  cfg.validate(model.config());
  Evaluation ev;
  ev.results.resize(examples.size());
  const AttackOptions aopts{opts.keep_candidates};

  auto run_one = [&](std::size_t i) {
    const auto& ex = examples[i];
    if (opts.attacker == Attacker::hack_attend) {
      ev.results[i] = hack_attend(model, ex.tokens, ex.label, cfg, aopts);
    } else {
      AttackConfig c = cfg;
      c.seed = mix_seed(cfg.seed, i);
      ev.results[i] = random_baseline(model, ex.tokens, ex.label, c, aopts);
    }
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) run_one(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
    {
      std::vector<std::jthread> pool;
      for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = next++; i < examples.size(); i = next++) run_one(i);
          } catch (...) {
            errors[static_cast<std::size_t>(t)] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  ev.metrics = compute_metrics(ev.results);
  ev.first_layer = layer_histogram(ev.results, model.config().num_layers, false);
  ev.last_layer = layer_histogram(ev.results, model.config().num_layers, true);
  return ev;
}

}  // namespace ahl
