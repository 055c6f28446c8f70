#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "ahl/model.hpp"

namespace ahl {

// Checkpoint layout:
//   "AHL1" | u32 LE header length | UTF-8 JSON header | f64 LE payload
// The header holds {"format_version", "config", "parameters": [{name, shape}]}
// and the payload stores parameters in manifest order.
inline constexpr char kCheckpointMagic[4] = {'A', 'H', 'L', '1'};
inline constexpr int kCheckpointVersion = 1;

enum class CheckpointErrorCode { io, bad_magic, version_mismatch, truncated, malformed_header, shape_mismatch, trailing_data };

std::string to_string(CheckpointErrorCode code);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorCode code, const std::string& what)
      : std::runtime_error(to_string(code) + ": " + what), code_(code) {}
  CheckpointErrorCode code() const { return code_; }

 private:
  CheckpointErrorCode code_;
};

std::string serialize_checkpoint(const TransformerModel& model);
TransformerModel deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const TransformerModel& model, const std::filesystem::path& path);
TransformerModel load_checkpoint(const std::filesystem::path& path);

}  // namespace ahl
