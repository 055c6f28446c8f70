#include "ahl/heatmap.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ahl/errors.hpp"

namespace ahl {

HeatmapFormat heatmap_format_from_string(const std::string& s) {
  if (s == "csv") return HeatmapFormat::csv;
  if (s == "pgm") return HeatmapFormat::pgm;
  throw ContractError("unknown heatmap format '" + s + "'");
}

std::string render_heatmap(const ForwardTrace& trace, int layer, int head, HeatmapFormat format) {
  if (layer < 0 || layer >= trace.layers || head < 0 || head >= trace.heads) {
    throw IndexError("heatmap: head (" + std::to_string(layer) + "," + std::to_string(head) + ") outside the model");
  }
  const int n = trace.seq;
  auto probs = trace.head_probs(layer, head);
  std::string out;
  if (format == HeatmapFormat::csv) {
    char buf[32];
    for (int k = 0; k < n; ++k) {
      for (int l = 0; l < n; ++l) {
        std::snprintf(buf, sizeof buf, "%.9f", probs[static_cast<std::size_t>(k) * n + l]);
        if (l) out += ',';
        out += buf;
      }
      out += '\n';
    }
  } else {
    out = "P5\n" + std::to_string(n) + " " + std::to_string(n) + "\n255\n";
    for (double p : probs) out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * p))));
  }
  return out;
}

void export_heatmap(const ForwardTrace& trace, int layer, int head, const std::filesystem::path& path,
                    HeatmapFormat format) {
  const std::string data = render_heatmap(trace, layer, head, format);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<std::vector<double>> parse_heatmap_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ahl
