#include "ahl/attack.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "ahl/errors.hpp"

namespace ahl {

std::string to_string(UnitRanking r) {
  switch (r) {
    case UnitRanking::gradient: return "gradient";
    case UnitRanking::attention_score: return "attention_score";
    case UnitRanking::gradient_magnitude: return "gradient_magnitude";
  }
  return "unknown";
}

UnitRanking unit_ranking_from_string(const std::string& s) {
  if (s == "gradient") return UnitRanking::gradient;
  if (s == "attention_score" || s == "score") return UnitRanking::attention_score;
  if (s == "gradient_magnitude") return UnitRanking::gradient_magnitude;
  throw ContractError("unknown ranking '" + s + "'");
}

std::string to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::success: return "success";
    case AttackStatus::fail: return "fail";
    case AttackStatus::skipped: return "skipped";
  }
  return "unknown";
}

AttackConfig AttackConfig::full_scale(const ModelConfig& m, double alpha) {
  AttackConfig c;
  c.alpha = alpha;
  c.l_max = m.num_layers;
  c.h_max = m.num_heads;
  return c;
}

AttackConfig AttackConfig::half_scale(const ModelConfig& m, double alpha) {
  AttackConfig c;
  c.alpha = alpha;
  c.l_max = std::max(1, m.num_layers / 2);
  c.h_max = std::max(1, m.num_heads / 2);
  return c;
}

void AttackConfig::validate(const ModelConfig& m) const {
  if (!(alpha > 0.0 && alpha <= 1.0)) throw ContractError("attack: alpha must lie in (0, 1]");
  if (l_max < 1 || l_max > m.num_layers) throw ContractError("attack: l_max must lie in [1, num_layers]");
  if (h_max < 1 || h_max > m.num_heads) throw ContractError("attack: h_max must lie in [1, num_heads]");
  if (query_budget && *query_budget < 0) throw ContractError("attack: negative query budget");
}

std::vector<Cell> rank_units(const ForwardTrace& trace, int layer, int head, UnitRanking ranking,
                             double gradient_epsilon) {
  const int n = trace.seq;
  std::vector<int> order(static_cast<std::size_t>(n) * n);
  std::iota(order.begin(), order.end(), 0);
  auto probs = trace.head_probs(layer, head);
  auto by_score = [&](int a, int b) { return probs[a] > probs[b]; };

  if (ranking == UnitRanking::attention_score) {
    std::stable_sort(order.begin(), order.end(), by_score);
  } else {
    auto grads = trace.head_grad(layer, head);
    double max_abs = 0.0;
    for (double g : grads) max_abs = std::max(max_abs, std::abs(g));
    if (max_abs < gradient_epsilon) {
      std::stable_sort(order.begin(), order.end(), by_score);
    } else if (ranking == UnitRanking::gradient) {
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return grads[a] < grads[b]; });
    } else {
      std::stable_sort(order.begin(), order.end(),
                       [&](int a, int b) { return std::abs(grads[a]) > std::abs(grads[b]); });
    }
  }
  std::vector<Cell> cells;
  cells.reserve(order.size());
  for (int idx : order) cells.push_back({idx / n, idx % n});
  return cells;
}

namespace {

// Supplies the layer order, head order and unit choice for the shared loop.
class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual std::vector<int> layers(QueryCounter& q) = 0;
  virtual std::vector<int> heads(int layer, QueryCounter& q) = 0;
  virtual std::vector<Cell> units(int layer, int head, const StructuredMask& current) = 0;
  virtual void after_failure(const StructuredMask&, QueryCounter&) {}
};

std::vector<Cell> take_attended(const std::vector<Cell>& ranked, const StructuredMask& current, int layer, int head,
                                std::size_t count) {
  std::vector<Cell> out;
  out.reserve(count);
  for (const Cell& c : ranked) {
    if (out.size() == count) break;
    if (current.attends(layer, head, c.row, c.col)) out.push_back(c);
  }
  return out;
}

class ImportanceStrategy final : public Strategy {
 public:
  ImportanceStrategy(const TransformerModel& model, std::span<const int> tokens, int gold, const AttackConfig& cfg,
                     ForwardTrace clean)
      : model_(model), tokens_(tokens), gold_(gold), cfg_(cfg), trace_(std::move(clean)) {}

  double clean_prob() const { return trace_.class_probs[gold_]; }

  std::vector<int> layers(QueryCounter& q) override {
    std::vector<int> out;
    for (const auto& s : score_layers(model_, tokens_, gold_, clean_prob(), &q)) out.push_back(s.layer);
    return out;
  }
  std::vector<int> heads(int layer, QueryCounter& q) override {
    std::vector<int> out;
    for (const auto& s : score_heads(model_, tokens_, gold_, layer, clean_prob(), &q)) out.push_back(s.head);
    return out;
  }
  std::vector<Cell> units(int layer, int head, const StructuredMask& current) override {
    const auto ranked = rank_units(trace_, layer, head, cfg_.ranking, cfg_.gradient_epsilon);
    return take_attended(ranked, current, layer, head, units_to_mask(cfg_.alpha, trace_.seq));
  }
  void after_failure(const StructuredMask& current, QueryCounter& q) override {
    if (!cfg_.refresh_gradients || !cfg_.accumulate) return;
    trace_ = forward(model_, tokens_, &current, nullptr, true, gold_);
    ++q.gradient;
  }

 private:
  const TransformerModel& model_;
  std::span<const int> tokens_;
  int gold_;
  const AttackConfig& cfg_;
  ForwardTrace trace_;
};

class RandomStrategy final : public Strategy {
 public:
  RandomStrategy(const ModelConfig& m, int seq, const AttackConfig& cfg)
      : m_(m), seq_(seq), cfg_(cfg), rng_(cfg.seed) {}

  std::vector<int> layers(QueryCounter&) override { return shuffled(m_.num_layers); }
  std::vector<int> heads(int, QueryCounter&) override { return shuffled(m_.num_heads); }
  std::vector<Cell> units(int layer, int head, const StructuredMask& current) override {
    std::vector<Cell> cells;
    for (int idx : shuffled(seq_ * seq_)) cells.push_back({idx / seq_, idx % seq_});
    return take_attended(cells, current, layer, head, units_to_mask(cfg_.alpha, seq_));
  }

 private:
  std::vector<int> shuffled(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    std::iota(v.begin(), v.end(), 0);
    // Fisher-Yates with an explicit draw so the order is stable across standard libraries.
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng_() % static_cast<std::uint64_t>(i + 1));
      std::swap(v[i], v[j]);
    }
    return v;
  }

  const ModelConfig& m_;
  int seq_;
  const AttackConfig& cfg_;
  std::mt19937_64 rng_;
};

AttackResult run_greedy(const TransformerModel& model, std::span<const int> tokens, int gold, const AttackConfig& cfg,
                        const AttackOptions& opts, Strategy& strategy, AttackResult result,
                        std::chrono::steady_clock::time_point start) {
  const auto& mc = model.config();
  const StructuredMask base = expand_base(mc.num_layers, mc.num_heads, result.final_mask.dims().seq);
  StructuredMask accumulated = base;
  QueryCounter q;
  q.gradient = result.gradient_queries;
  result.status = AttackStatus::fail;

  auto finish = [&](const StructuredMask& final_mask) {
    result.final_mask = final_mask;
    result.candidate_queries = q.candidate;
    result.scoring_queries = q.scoring;
    result.gradient_queries = q.gradient;
    result.hamming = hamming(base, final_mask);
    result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
  };
  auto budget_left = [&] { return !cfg.query_budget || q.candidate < *cfg.query_budget; };

  const auto layer_order = strategy.layers(q);
  for (int li = 0; li < cfg.l_max && li < static_cast<int>(layer_order.size()); ++li) {
    if (!budget_left()) break;
    const int layer = layer_order[li];
    const auto head_order = strategy.heads(layer, q);
    for (int hj = 0; hj < cfg.h_max && hj < static_cast<int>(head_order.size()); ++hj) {
      if (!budget_left()) return finish(accumulated);
      const int head = head_order[hj];
      const StructuredMask& onto = cfg.accumulate ? accumulated : base;
      UnitSelection sel{layer, head, strategy.units(layer, head, onto)};
      SelectionOutcome applied = apply_selection(onto, sel);

      Prediction p = predict(model, tokens, &applied.mask, nullptr, gold);
      ++q.candidate;
      result.trace.push_back({layer, head, static_cast<int>(applied.zeroed.size()),
                              static_cast<int>(applied.safeguard_hits), p.predicted_class, *p.gold_prob});
      if (opts.keep_candidates) result.candidates.push_back(applied.mask);
      if (p.predicted_class != gold) {
        result.status = AttackStatus::success;
        return finish(applied.mask);
      }
      if (cfg.accumulate) accumulated = std::move(applied.mask);
      strategy.after_failure(accumulated, q);
    }
  }
  return finish(accumulated);
}

AttackResult skipped(const ModelConfig& mc, int seq, double clean_prob, std::chrono::steady_clock::time_point start) {
  AttackResult r;
  r.status = AttackStatus::skipped;
  r.final_mask = expand_base(mc.num_layers, mc.num_heads, seq);
  r.clean_gold_prob = clean_prob;
  r.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace

AttackResult hack_attend(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                         const AttackConfig& cfg, const AttackOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(model.config());
  ForwardTrace clean = forward(model, tokens, nullptr, nullptr, true, gold_label);
  if (clean.predicted_class != gold_label) {
    auto r = skipped(model.config(), clean.seq, clean.class_probs[gold_label], start);
    r.gradient_queries = 1;
    return r;
  }
  AttackResult r;
  r.final_mask = expand_base(model.config().num_layers, model.config().num_heads, clean.seq);
  r.clean_gold_prob = clean.class_probs[gold_label];
  r.gradient_queries = 1;
  ImportanceStrategy strategy(model, tokens, gold_label, cfg, std::move(clean));
  return run_greedy(model, tokens, gold_label, cfg, opts, strategy, std::move(r), start);
}

AttackResult random_baseline(const TransformerModel& model, std::span<const int> tokens, int gold_label,
                             const AttackConfig& cfg, const AttackOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  cfg.validate(model.config());
  Prediction clean = predict(model, tokens, nullptr, nullptr, gold_label);
  const int seq = static_cast<int>(effective_length(tokens));
  if (clean.predicted_class != gold_label) return skipped(model.config(), seq, *clean.gold_prob, start);
  AttackResult r;
  r.final_mask = expand_base(model.config().num_layers, model.config().num_heads, seq);
  r.clean_gold_prob = *clean.gold_prob;
  RandomStrategy strategy(model.config(), seq, cfg);
  return run_greedy(model, tokens, gold_label, cfg, opts, strategy, std::move(r), start);
}

}  // namespace ahl
