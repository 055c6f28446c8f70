#include "ahl/report.hpp"

#include <fstream>

namespace ahl {

using nlohmann::json;

namespace {

json histogram_json(const LayerHistogram& h) {
  json bins = json::array();
  for (std::size_t i = 0; i < h.counts.size(); ++i) bins.push_back(static_cast<int>(i) - 1);
  return {{"bins", bins}, {"counts", h.counts}, {"normalized", h.normalized}};
}

json sample_json(std::size_t index, const AttackResult& r) {
  json j{{"index", index},
         {"status", to_string(r.status)},
         {"candidate_queries", r.candidate_queries},
         {"scoring_queries", r.scoring_queries},
         {"hamming", {{"total_bits", r.hamming.total_bits},
                      {"per_matrix_avg", r.hamming.per_matrix_avg},
                      {"n_perturbed", r.hamming.n_perturbed}}}};
  if (r.success() && !r.trace.empty()) {
    j["first_layer"] = r.trace.front().layer;
    j["last_layer"] = r.trace.back().layer;
  }
  return j;
}

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, json>>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "_" + it.key();
    if (it->is_object()) {
      flatten(*it, key, out);
    } else {
      out.emplace_back(key, *it);
    }
  }
}

}  // namespace

Report make_report(const Evaluation& ev, json config, std::uint64_t seed, bool include_samples) {
  Report r;
  r.config = std::move(config);
  r.metrics = ev.metrics;
  r.first_layer = ev.first_layer;
  r.last_layer = ev.last_layer;
  if (include_samples) r.samples = ev.results;
  r.seed = seed;
  return r;
}

json metrics_to_json(const Metrics& m, bool include_timing) {
  json j{{"clean_accuracy", m.clean_accuracy},
         {"robust_accuracy", m.robust_accuracy},
         {"asr", m.asr},
         {"mean_candidate_queries", m.mean_candidate_queries},
         {"mean_success_queries", m.mean_success_queries},
         {"mean_scoring_queries", m.mean_scoring_queries},
         {"mean_hamming", {{"total_bits", m.mean_hamming.total_bits},
                           {"per_matrix_avg", m.mean_hamming.per_matrix_avg},
                           {"n_perturbed", m.mean_hamming.n_perturbed}}},
         {"n_samples", m.n_samples},
         {"n_correct", m.n_correct},
         {"n_success", m.n_success}};
  if (include_timing) j["mean_wall_time_s"] = m.mean_wall_time_s;
  return j;
}

json report_to_json(const Report& r) {
  json samples = json::array();
  for (std::size_t i = 0; i < r.samples.size(); ++i) samples.push_back(sample_json(i, r.samples[i]));
  return {{"config", r.config},
          {"environment", {{"version", r.version}, {"seed", r.seed}}},
          {"metrics", metrics_to_json(r.metrics, r.include_timing)},
          {"histogram", {{"first_layer", histogram_json(r.first_layer)}, {"last_layer", histogram_json(r.last_layer)}}},
          {"samples", samples}};
}

std::string canonical_json(const json& j) { return j.dump(2) + "\n"; }

std::vector<std::string> report_csv_columns() {
  std::vector<std::pair<std::string, json>> flat;
  flatten(metrics_to_json(Metrics{}, false), "", flat);
  std::vector<std::string> cols;
  for (auto& [k, v] : flat) cols.push_back(k);
  return cols;
}

std::string report_csv_header() {
  std::string out;
  for (const auto& c : report_csv_columns()) out += (out.empty() ? "" : ",") + c;
  return out;
}

std::string report_csv_row(const json& report) {
  std::vector<std::pair<std::string, json>> flat;
  flatten(report.at("metrics"), "", flat);
  const auto cols = report_csv_columns();
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    if (i) out += ",";
    for (const auto& [k, v] : flat)
      if (k == cols[i]) out += v.dump();
  }
  return out;
}

std::vector<std::string> validate_report(const json& r) {
  std::vector<std::string> problems;
  auto need = [&](const json& obj, const std::string& path, const std::string& key, json::value_t type) {
    if (!obj.is_object() || !obj.contains(key)) {
      problems.push_back("missing " + path + key);
      return;
    }
    const auto t = obj.at(key).type();
    const bool number_ok = type == json::value_t::number_float &&
                           (t == json::value_t::number_integer || t == json::value_t::number_unsigned);
    const bool int_ok = type == json::value_t::number_integer && t == json::value_t::number_unsigned;
    if (t != type && !number_ok && !int_ok) problems.push_back("wrong type for " + path + key);
  };
  using vt = json::value_t;
  need(r, "", "config", vt::object);
  need(r, "", "environment", vt::object);
  need(r, "", "metrics", vt::object);
  need(r, "", "histogram", vt::object);
  need(r, "", "samples", vt::array);
  if (!problems.empty()) return problems;
  need(r["environment"], "environment.", "version", vt::string);
  need(r["environment"], "environment.", "seed", vt::number_integer);
  const json& m = r["metrics"];
  for (const char* k : {"clean_accuracy", "robust_accuracy", "asr", "mean_candidate_queries", "mean_success_queries",
                        "mean_scoring_queries"})
    need(m, "metrics.", k, vt::number_float);
  for (const char* k : {"n_samples", "n_correct", "n_success"}) need(m, "metrics.", k, vt::number_integer);
  need(m, "metrics.", "mean_hamming", vt::object);
  if (m.contains("mean_hamming"))
    for (const char* k : {"total_bits", "per_matrix_avg", "n_perturbed"})
      need(m["mean_hamming"], "metrics.mean_hamming.", k, vt::number_float);
  for (const char* h : {"first_layer", "last_layer"}) {
    need(r["histogram"], "histogram.", h, vt::object);
    if (!r["histogram"].contains(h)) continue;
    for (const char* k : {"bins", "counts", "normalized"})
      need(r["histogram"][h], std::string("histogram.") + h + ".", k, vt::array);
  }
  if (problems.empty()) {
    for (const char* k : {"asr", "robust_accuracy", "clean_accuracy"}) {
      const double v = m[k].get<double>();
      if (v < 0.0 || v > 1.0) problems.push_back(std::string("metrics.") + k + " outside [0, 1]");
    }
  }
  return problems;
}

void write_report(const Report& r, const std::filesystem::path& path) {
  const json j = report_to_json(r);
  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << canonical_json(j);
  }
  std::ofstream csv(path.string() + ".csv", std::ios::binary | std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot write " + path.string() + ".csv");
  csv << report_csv_header() << '\n' << report_csv_row(j) << '\n';
}

std::string merge_reports_csv(const std::vector<std::pair<std::string, json>>& reports) {
  std::string out = "source," + report_csv_header() + "\n";
  for (const auto& [source, j] : reports) out += source + "," + report_csv_row(j) + "\n";
  return out;
}

}  // namespace ahl
