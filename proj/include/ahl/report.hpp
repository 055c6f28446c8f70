#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ahl/evaluate.hpp"

namespace ahl {

inline constexpr const char* kVersion = "0.1.0";

struct Report {
  nlohmann::json config = nlohmann::json::object();  // echo of model/attack/smoothing/task settings
  Metrics metrics;
  LayerHistogram first_layer;
  LayerHistogram last_layer;
  std::vector<AttackResult> samples;  // optional per-sample summary
  std::uint64_t seed = 0;
  std::string version = kVersion;
  // Wall time is the only non-deterministic field; it is written only on request.
  bool include_timing = false;
};

Report make_report(const Evaluation& ev, nlohmann::json config, std::uint64_t seed, bool include_samples = true);

nlohmann::json metrics_to_json(const Metrics& m, bool include_timing);
nlohmann::json report_to_json(const Report& r);
// Sorted keys, two-space indent, trailing newline.
std::string canonical_json(const nlohmann::json& j);

// Flat CSV view of the metrics block; numbers use the same text as the JSON.
std::vector<std::string> report_csv_columns();
std::string report_csv_header();
std::string report_csv_row(const nlohmann::json& report);

// Problems found against the documented report schema; empty when valid.
std::vector<std::string> validate_report(const nlohmann::json& report);

// Writes <path> (JSON) and <path>.csv (header + one row).
void write_report(const Report& r, const std::filesystem::path& path);

// CSV table with a leading "source" column, one row per report.
std::string merge_reports_csv(const std::vector<std::pair<std::string, nlohmann::json>>& reports);

}  // namespace ahl
