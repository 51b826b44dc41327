#pragma once

#include <string>
#include <utility>
#include <vector>

#include "terragen/optim.hpp"
#include "terragen/tensor.hpp"

namespace terragen {

// Single-file checkpoint: header line "TERRAGEN-CKPT-1", one-line JSON
// manifest (name, shape, dtype, byte offset per parameter), then raw
// little-endian float payloads.

inline constexpr const char* kCheckpointMagic = "TERRAGEN-CKPT-1";

void save_checkpoint(const std::string& path, const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::string& dtype = "f64");
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

void save_params(const std::string& path, const ParamStore& params, const std::string& dtype = "f64");
// Loads values into matching names; throws on missing name or shape mismatch.
void load_params(const std::string& path, ParamStore& params);

}  // namespace terragen
