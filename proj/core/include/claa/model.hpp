// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "claa/config.hpp"
#include "claa/tensor.hpp"

namespace claa {

/// Weights of one decoder block. Linear maps are stored `[in][out]` and
/// applied as `y = x * W`.
struct LayerWeights {
  Tensor attn_norm;  // [d_model]
  Tensor wq;         // [d_model][H*d_k]
  Tensor wk;         // [d_model][G*d_k]
  Tensor wv;         // [d_model][G*d_k]
  Tensor wo;         // [H*d_k][d_model]
  Tensor ffn_norm;   // [d_model]
  Tensor w_gate;     // [d_model][ffn]
  Tensor w_up;       // [d_model][ffn]
  Tensor w_down;     // [ffn][d_model]
};

/// Pre-norm decoder-only transformer. Immutable once built; share by const&.
struct Model {
  ModelConfig config;
  Tensor embed;       // [vocab][d_model]
  std::vector<LayerWeights> layers;
  Tensor final_norm;  // [d_model]
  Tensor lm_head;     // [d_model][vocab]

  /// Tensor names and expected shapes in canonical serialization order.
  static std::vector<std::pair<std::string, std::vector<std::size_t>>> tensor_layout(
      const ModelConfig& config);

  /// Same order as tensor_layout().
  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const;
  std::vector<std::pair<std::string, Tensor*>> named_tensors();

  /// FNV-1a over the config and every tensor's raw bytes.
  std::uint64_t checksum() const;
};

/// Deterministic weights: every linear/embedding entry is uniform in
/// [-0.05, 0.05] from a mt19937_64 stream seeded with `seed`; normalization
/// gains are 1. Same (config, seed) gives bit-identical weights on any platform.
Model random_init_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace claa
