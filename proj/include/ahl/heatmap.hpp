#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ahl/model.hpp"

namespace ahl {

enum class HeatmapFormat { csv, pgm };

HeatmapFormat heatmap_format_from_string(const std::string& s);

// N x N attention probabilities of one head. csv: decimal grid, one row per
// line. pgm: binary P5, 8-bit, pixel = round(255 * prob).
std::string render_heatmap(const ForwardTrace& trace, int layer, int head, HeatmapFormat format);
void export_heatmap(const ForwardTrace& trace, int layer, int head, const std::filesystem::path& path,
                    HeatmapFormat format);

std::vector<std::vector<double>> parse_heatmap_csv(const std::string& text);

}  // namespace ahl
