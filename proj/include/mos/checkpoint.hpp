#pragma once

#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mos/tensor.hpp"

namespace mos {

// Container format: magic "MOSCKPT1", 4-byte little-endian manifest length,
// UTF-8 JSON manifest {step, config, tensors:[{name, shape, offset}]}, then
// the packed little-endian 32-bit float payload. Offsets are byte offsets
// into the payload. Files are written to a temp name and renamed into place.

struct LoadedCheckpoint {
  long long step = 0;
  nlohmann::json config;
  std::map<std::string, Tensor<float>> tensors;
};

void save_checkpoint(const std::string &path, const std::vector<ParamRef<float>> &tensors, long long step,
                     const nlohmann::json &config);

LoadedCheckpoint load_checkpoint(const std::string &path);

/// Copy loaded tensors into the given refs by name; every ref must be
/// present with a matching shape.
void restore_into(const LoadedCheckpoint &ckpt, const std::vector<ParamRef<float>> &refs);

} // namespace mos
