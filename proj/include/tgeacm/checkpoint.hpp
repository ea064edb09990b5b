#pragma once

// Checkpoint directory layout:
//   manifest.json  format/version, dtype, byte order, step, seed, RNG state,
//                  model config, effective run config, vocabulary and
//                  "tensors": name -> {shape, dtype, offset}
//   params.bin     little-endian float32 values, row-major, manifest order

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tgeacm/model.hpp"

namespace tgeacm {

inline constexpr const char* kCheckpointFormat = "tgeacm-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  int step = 0;
  std::uint64_t seed = 0;
  std::string rng_state;
  std::vector<std::pair<std::string, std::string>> config;  // effective run config
};

nlohmann::ordered_json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

// Values are written as float32; parameters kept float-representable (as the
// trainer does) therefore round-trip bit-exactly.
void save_checkpoint(const std::string& dir, const Model& model, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  Model model;
  CheckpointMeta meta;
};

// Missing directory -> InvalidInput; malformed manifest or payload -> FormatError;
// tensors that do not match the model layout -> IntegrityError.
LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace tgeacm
