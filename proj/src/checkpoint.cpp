#include "ahl/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ahl/config_json.hpp"
#include "ahl/errors.hpp"

namespace ahl {

using nlohmann::json;

std::string to_string(CheckpointErrorCode code) {
  switch (code) {
    case CheckpointErrorCode::io: return "io error";
    case CheckpointErrorCode::bad_magic: return "bad magic";
    case CheckpointErrorCode::version_mismatch: return "version mismatch";
    case CheckpointErrorCode::truncated: return "truncated file";
    case CheckpointErrorCode::malformed_header: return "malformed header";
    case CheckpointErrorCode::shape_mismatch: return "shape mismatch";
    case CheckpointErrorCode::trailing_data: return "trailing data";
  }
  return "unknown";
}

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  void need(std::size_t n, const char* what) const {
    if (s_.size() - pos_ < n) throw CheckpointError(CheckpointErrorCode::truncated, std::string("while reading ") + what);
  }
  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64(const char* what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const TransformerModel& model) {
  json manifest = json::array();
  for (const auto& p : model.parameters()) manifest.push_back({{"name", p.name}, {"shape", p.value.shape()}});
  const json header{{"format_version", kCheckpointVersion}, {"config", to_json(model.config())}, {"parameters", manifest}};
  const std::string text = header.dump();

  std::string out(kCheckpointMagic, 4);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for (const auto& p : model.parameters())
    for (double v : p.value.values()) put_f64(out, v);
  return out;
}

TransformerModel deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.bytes(4, "magic") != std::string(kCheckpointMagic, 4)) {
    throw CheckpointError(CheckpointErrorCode::bad_magic, "not an AHL1 checkpoint");
  }
  const auto len = r.u32("header length");
  const std::string text = r.bytes(len, "header");
  json header;
  try {
    header = json::parse(text);
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorCode::malformed_header, e.what());
  }
  ModelConfig cfg;
  json manifest;
  try {
    const int version = header.at("format_version").get<int>();
    if (version != kCheckpointVersion) {
      throw CheckpointError(CheckpointErrorCode::version_mismatch,
                            "file version " + std::to_string(version) + ", reader version " +
                                std::to_string(kCheckpointVersion));
    }
    cfg = model_config_from_json(header.at("config"));
    cfg.validate();
    manifest = header.at("parameters");
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorCode::malformed_header, e.what());
  } catch (const ContractError& e) {
    throw CheckpointError(CheckpointErrorCode::malformed_header, e.what());
  }

  const auto layout = TransformerModel::parameter_layout(cfg);
  if (!manifest.is_array() || manifest.size() != layout.size()) {
    throw CheckpointError(CheckpointErrorCode::shape_mismatch, "parameter manifest does not match the config");
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    Shape shape;
    std::string name;
    try {
      name = manifest[i].at("name").get<std::string>();
      shape = manifest[i].at("shape").get<Shape>();
    } catch (const json::exception& e) {
      throw CheckpointError(CheckpointErrorCode::malformed_header, e.what());
    }
    if (name != layout[i].first || shape != layout[i].second) {
      throw CheckpointError(CheckpointErrorCode::shape_mismatch,
                            "manifest entry " + name + " " + shape_str(shape) + ", config expects " + layout[i].first +
                                " " + shape_str(layout[i].second));
    }
  }

  TransformerModel model(cfg, 0);
  for (auto& p : model.parameters()) {
    for (double& v : p.value.mutable_values()) v = r.f64(p.name.c_str());
  }
  if (!r.done()) throw CheckpointError(CheckpointErrorCode::trailing_data, "bytes after the last parameter");
  return model;
}

void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorCode::io, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorCode::io, "write failed for " + path.string());
}

TransformerModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorCode::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace ahl
