// ahl: command-line driver for data generation, training, attacks and reports.

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ahl/checkpoint.hpp"
#include "ahl/config_json.hpp"
#include "ahl/evaluate.hpp"
#include "ahl/heatmap.hpp"
#include "ahl/report.hpp"
#include "ahl/tasks.hpp"
#include "ahl/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Usage problems detected after CLI11 parsing (bad enum values, missing files
// named by the user) map to exit code 1 like parse errors do.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read config " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

const std::vector<ahl::Example>& pick_split(const ahl::Dataset& ds, const std::string& split) {
  if (split == "train") return ds.train;
  if (split == "dev") return ds.dev;
  if (split == "test") return ds.test;
  throw UsageError("unknown split '" + split + "' (expected train, dev or test)");
}

std::vector<ahl::Example> take(const std::vector<ahl::Example>& v, long limit) {
  if (limit < 0 || static_cast<std::size_t>(limit) >= v.size()) return v;
  return {v.begin(), v.begin() + limit};
}

template <typename F>
auto parse_enum(F f, const std::string& value) {
  try {
    return f(value);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
}

// ---- gen-data ---------------------------------------------------------------

struct GenDataArgs {
  std::string task = "pair_match";
  int seq_len = 32;
  int vocab_size = 200;
  int n_train = 10000;
  int n_dev = 1000;
  int n_test = 1000;
  std::uint64_t seed = 0;
  std::string out;
};

int run_gen_data(const GenDataArgs& a) {
  ahl::TaskSpec spec;
  spec.kind = parse_enum(ahl::task_kind_from_string, a.task);
  spec.seq_len = a.seq_len;
  spec.vocab_size = a.vocab_size;
  spec.n_train = a.n_train;
  spec.n_dev = a.n_dev;
  spec.n_test = a.n_test;
  spec.seed = a.seed;
  try {
    spec.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  ahl::save_dataset(ahl::generate(spec), a.out);
  std::printf("wrote %s (%d/%d/%d examples)\n", a.out.c_str(), a.n_train, a.n_dev, a.n_test);
  return 0;
}

// ---- train ------------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out_ckpt;
  std::optional<double> sattend_alpha;
  std::string curve;
};

int run_train(const TrainArgs& a) {
  const ahl::Dataset ds = ahl::load_dataset(a.data);
  json cfg = a.config.empty() ? json::object() : read_json_file(a.config);

  ahl::ModelConfig mc;
  mc.vocab_size = ds.spec.vocab_size;
  mc.max_seq_len = ds.spec.seq_len;
  if (cfg.contains("model")) mc = ahl::model_config_from_json(cfg.at("model"), mc);
  ahl::TrainConfig tc = ahl::train_config_from_json(cfg.contains("train") ? cfg.at("train") : cfg);
  if (a.sattend_alpha) tc.smoothing.alpha_s = *a.sattend_alpha;
  try {
    mc.validate();
    tc.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  if (mc.vocab_size < ds.spec.vocab_size || mc.max_seq_len < ds.spec.seq_len)
    throw UsageError("model vocab_size/max_seq_len smaller than the dataset's");

  ahl::TransformerModel model(mc, tc.seed);
  const ahl::TrainResult r = ahl::train(model, ds.train, ds.dev, tc);
  json curve = json::array();
  for (const auto& e : r.curve) {
    std::printf("epoch %d  loss %.6f  dev_acc %.4f  masked %.4f\n", e.epoch, e.mean_loss, e.dev_accuracy,
                e.masked_fraction);
    curve.push_back({{"epoch", e.epoch},
                     {"mean_loss", e.mean_loss},
                     {"dev_accuracy", e.dev_accuracy},
                     {"masked_fraction", e.masked_fraction}});
  }
  ahl::save_checkpoint(model, a.out_ckpt);
  if (!a.curve.empty()) {
    std::ofstream out(a.curve, std::ios::binary | std::ios::trunc);
    out << ahl::canonical_json({{"model", ahl::to_json(mc)}, {"train", ahl::to_json(tc)}, {"curve", curve}});
  }
  return 0;
}

// ---- attack -----------------------------------------------------------------

struct AttackArgs {
  std::string ckpt;
  std::string data;
  std::string config;
  std::optional<double> alpha;
  std::optional<int> lmax;
  std::optional<int> hmax;
  std::optional<std::string> ranking;
  std::optional<bool> accumulate;
  std::optional<long> budget;
  std::optional<std::uint64_t> seed;
  std::string attacker = "hack_attend";
  std::string split = "test";
  long limit = -1;
  int threads = 1;
  bool timing = false;
  std::string report;
  std::string dump_masks;
};

// Per attacked sample: u32 LE example index, u32 LE candidate count, then one
// mask record per candidate in query order.
void dump_masks(const ahl::Evaluation& ev, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto put_u32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.put(static_cast<char>((v >> (8 * b)) & 0xffu));
  };
  for (std::size_t i = 0; i < ev.results.size(); ++i) {
    const auto& r = ev.results[i];
    if (r.status == ahl::AttackStatus::skipped) continue;
    put_u32(static_cast<std::uint32_t>(i));
    put_u32(static_cast<std::uint32_t>(r.candidates.size()));
    for (const auto& m : r.candidates) ahl::write_mask_record(out, m);
  }
}

int run_attack(const AttackArgs& a) {
  // Flag values are checked before any file is touched so typos report as usage errors.
  std::optional<ahl::UnitRanking> ranking;
  if (a.ranking) ranking = parse_enum(ahl::unit_ranking_from_string, *a.ranking);
  ahl::EvalOptions opts;
  if (a.attacker == "hack_attend") opts.attacker = ahl::Attacker::hack_attend;
  else if (a.attacker == "random") opts.attacker = ahl::Attacker::random_baseline;
  else throw UsageError("unknown attacker '" + a.attacker + "' (expected hack_attend or random)");
  opts.threads = a.threads;
  opts.keep_candidates = !a.dump_masks.empty();

  const ahl::TransformerModel model = ahl::load_checkpoint(a.ckpt);
  const ahl::Dataset ds = ahl::load_dataset(a.data);
  const auto examples = take(pick_split(ds, a.split), a.limit);
  const auto& mc = model.config();

  json file_cfg = a.config.empty() ? json::object() : read_json_file(a.config);
  if (file_cfg.contains("attack")) file_cfg = file_cfg.at("attack");
  ahl::AttackConfig cfg = ahl::attack_config_from_json(file_cfg, ahl::AttackConfig::full_scale(mc));
  if (a.alpha) cfg.alpha = *a.alpha;
  if (a.lmax) cfg.l_max = *a.lmax;
  if (a.hmax) cfg.h_max = *a.hmax;
  if (ranking) cfg.ranking = *ranking;
  if (a.accumulate) cfg.accumulate = *a.accumulate;
  if (a.budget) cfg.query_budget = *a.budget;
  if (a.seed) cfg.seed = *a.seed;
  try {
    cfg.validate(mc);
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }

  const ahl::Evaluation ev = ahl::evaluate_under_attack(model, examples, cfg, opts);

  json echo{{"model", ahl::to_json(mc)},
            {"attack", ahl::to_json(cfg)},
            {"attacker", a.attacker},
            {"task", ahl::to_json(ds.spec)},
            {"split", a.split},
            {"n_examples", examples.size()}};
  ahl::Report rep = ahl::make_report(ev, echo, cfg.seed);
  rep.include_timing = a.timing;
  if (!a.report.empty()) ahl::write_report(rep, a.report);
  if (!a.dump_masks.empty()) dump_masks(ev, a.dump_masks);

  const auto& m = ev.metrics;
  std::printf("clean_acc %.4f  robust_acc %.4f  asr %.4f  queries %.3f  (%ld/%ld/%ld)\n", m.clean_accuracy,
              m.robust_accuracy, m.asr, m.mean_candidate_queries, m.n_success, m.n_correct, m.n_samples);
  return 0;
}

// ---- eval -------------------------------------------------------------------

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  double sattend_alpha = 0.0;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  const ahl::TransformerModel model = ahl::load_checkpoint(a.ckpt);
  const ahl::Dataset ds = ahl::load_dataset(a.data);
  const auto& examples = pick_split(ds, a.split);
  double acc = 0.0;
  if (a.sattend_alpha > 0.0) {
    ahl::SmoothingConfig s;
    s.alpha_s = a.sattend_alpha;
    s.apply_at_eval = true;
    acc = ahl::evaluate_clean(model, examples, s, a.seed);
  } else {
    acc = ahl::evaluate_clean(model, examples);
  }
  std::cout << ahl::canonical_json({{"split", a.split}, {"n_samples", examples.size()}, {"accuracy", acc}});
  return 0;
}

// ---- heatmap ----------------------------------------------------------------

struct HeatmapArgs {
  std::string ckpt;
  std::string data;
  std::string split = "test";
  long index = 0;
  int layer = 0;
  int head = 0;
  std::string format = "csv";
  std::string out;
};

int run_heatmap(const HeatmapArgs& a) {
  const ahl::TransformerModel model = ahl::load_checkpoint(a.ckpt);
  const ahl::Dataset ds = ahl::load_dataset(a.data);
  const auto& examples = pick_split(ds, a.split);
  if (a.index < 0 || static_cast<std::size_t>(a.index) >= examples.size())
    throw UsageError("--index out of range (split has " + std::to_string(examples.size()) + " examples)");
  if (a.layer < 0 || a.layer >= model.config().num_layers || a.head < 0 || a.head >= model.config().num_heads)
    throw UsageError("--layer/--head out of range");
  const auto format = parse_enum(ahl::heatmap_format_from_string, a.format);
  const auto& ex = examples[static_cast<std::size_t>(a.index)];
  const ahl::ForwardTrace trace = ahl::forward(model, ex.tokens, nullptr, nullptr, false);
  ahl::export_heatmap(trace, a.layer, a.head, a.out, format);
  return 0;
}

// ---- report -----------------------------------------------------------------

struct ReportArgs {
  std::vector<std::string> merge;
  std::string out;
};

int run_report(const ReportArgs& a) {
  std::vector<std::pair<std::string, json>> reports;
  for (const auto& path : a.merge) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot read report " + path);
    json j = json::parse(in);
    const auto problems = ahl::validate_report(j);
    if (!problems.empty()) throw std::runtime_error(path + ": " + problems.front());
    reports.emplace_back(fs::path(path).filename().string(), std::move(j));
  }
  const std::string table = ahl::merge_reports_csv(reports);
  if (a.out.empty()) {
    std::cout << table;
  } else {
    std::ofstream out(a.out, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + a.out);
    out << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structural attention perturbation laboratory"};
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic dataset directory");
  gen_cmd->add_option("--task", gen.task, "keyword_sentiment or pair_match")->capture_default_str();
  gen_cmd->add_option("--seq-len", gen.seq_len, "Tokens per example including CLS")->capture_default_str();
  gen_cmd->add_option("--vocab-size", gen.vocab_size)->capture_default_str();
  gen_cmd->add_option("--n-train", gen.n_train)->capture_default_str();
  gen_cmd->add_option("--n-dev", gen.n_dev)->capture_default_str();
  gen_cmd->add_option("--n-test", gen.n_test)->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a classifier and write a checkpoint");
  train_cmd->add_option("--data", tr.data, "Dataset directory")->required();
  train_cmd->add_option("--config", tr.config, "JSON with optional \"model\" and \"train\" blocks");
  train_cmd->add_option("--out-ckpt", tr.out_ckpt)->required();
  train_cmd->add_option("--sattend-alpha", tr.sattend_alpha, "Training-time attention masking rate");
  train_cmd->add_option("--curve", tr.curve, "Write the training curve as JSON");

  AttackArgs at;
  auto* attack_cmd = app.add_subcommand("attack", "Attack every correctly classified example of a split");
  attack_cmd->add_option("--ckpt", at.ckpt)->required();
  attack_cmd->add_option("--data", at.data)->required();
  attack_cmd->add_option("--config", at.config, "AttackConfig JSON (flat or under \"attack\")");
  attack_cmd->add_option("--alpha", at.alpha);
  attack_cmd->add_option("--lmax", at.lmax);
  attack_cmd->add_option("--hmax", at.hmax);
  attack_cmd->add_option("--ranking", at.ranking, "gradient, attention_score or gradient_magnitude");
  attack_cmd->add_flag("--accumulate,!--no-accumulate", at.accumulate);
  attack_cmd->add_option("--budget", at.budget, "Candidate query budget per sample");
  attack_cmd->add_option("--seed", at.seed);
  attack_cmd->add_option("--attacker", at.attacker, "hack_attend or random")->capture_default_str();
  attack_cmd->add_option("--split", at.split)->capture_default_str();
  attack_cmd->add_option("--limit", at.limit, "Attack only the first n examples");
  attack_cmd->add_option("--threads", at.threads)->capture_default_str();
  attack_cmd->add_flag("--timing", at.timing, "Include wall time in the report");
  attack_cmd->add_option("--report", at.report, "Report path; a .csv twin is written next to it");
  attack_cmd->add_option("--dump-masks", at.dump_masks, "Binary dump of every candidate mask");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Clean accuracy of a checkpoint");
  eval_cmd->add_option("--ckpt", ev.ckpt)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--split", ev.split)->capture_default_str();
  eval_cmd->add_option("--sattend-alpha", ev.sattend_alpha, "Evaluate under random attention masks");
  eval_cmd->add_option("--seed", ev.seed);

  HeatmapArgs hm;
  auto* heatmap_cmd = app.add_subcommand("heatmap", "Export one head's attention map");
  heatmap_cmd->add_option("--ckpt", hm.ckpt)->required();
  heatmap_cmd->add_option("--data", hm.data)->required();
  heatmap_cmd->add_option("--split", hm.split)->capture_default_str();
  heatmap_cmd->add_option("--index", hm.index)->capture_default_str();
  heatmap_cmd->add_option("--layer", hm.layer)->capture_default_str();
  heatmap_cmd->add_option("--head", hm.head)->capture_default_str();
  heatmap_cmd->add_option("--format", hm.format, "csv or pgm")->capture_default_str();
  heatmap_cmd->add_option("--out", hm.out)->required();

  ReportArgs rp;
  auto* report_cmd = app.add_subcommand("report", "Merge attack reports into one CSV table");
  report_cmd->add_option("--merge", rp.merge, "Report JSON files")->required()->expected(1, -1);
  report_cmd->add_option("--out", rp.out, "Output CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_cmd) return run_gen_data(gen);
    if (*train_cmd) return run_train(tr);
    if (*attack_cmd) return run_attack(at);
    if (*eval_cmd) return run_eval(ev);
    if (*heatmap_cmd) return run_heatmap(hm);
    if (*report_cmd) return run_report(rp);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 1;
}
