// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "claa/model.hpp"

namespace claa {

// Container layout: a directory holding
//   config.json  - ModelConfig as a JSON object
//   weights.bin  - little-endian records
//                  [u32 name_len][name][u32 ndim][u32 dims...][f32 data...]
// Records are written in Model::tensor_layout() order; any order is accepted
// on load.

/// Loads and validates a container. Throws FormatError naming the offending
/// tensor on a missing tensor, shape mismatch or malformed record.
Model load_model(const std::filesystem::path& dir);

/// Writes config.json and weights.bin. Refuses an existing directory unless
/// `force` is set.
void save_model(const Model& model, const std::filesystem::path& dir, bool force = false);

std::vector<std::uint8_t> serialize_weights(const Model& model);
Model deserialize_weights(const ModelConfig& config, const std::vector<std::uint8_t>& bytes);
std::string serialize_config(const ModelConfig& config);

}  // namespace claa
