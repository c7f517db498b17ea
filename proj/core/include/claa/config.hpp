// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>

#include <nlohmann/json.hpp>

namespace claa {

using TokenId = std::int32_t;
using Position = std::int32_t;

/// Shape parameters of a decoder-only transformer with grouped-query attention.
///
/// Query head `h` reads key/value group `h / (num_heads / num_kv_heads)`.
/// The feed-forward width is fixed at `4 * d_model` so every tensor shape
/// follows from these fields alone.
struct ModelConfig {
  std::size_t num_layers = 8;
  std::size_t d_model = 128;
  std::size_t num_heads = 8;
  std::size_t num_kv_heads = 4;
  std::size_t head_dim = 16;
  std::size_t vocab_size = 512;
  double rope_theta = 10000.0;
  std::size_t max_position = 8192;

  /// Throws ConfigError when a count is zero, d_model != num_heads * head_dim,
  /// num_heads is not a multiple of num_kv_heads, head_dim is odd, or
  /// rope_theta is not positive.
  void validate() const;

  std::size_t heads_per_group() const { return num_heads / num_kv_heads; }
  std::size_t group_of(std::size_t head) const { return head / heads_per_group(); }
  std::size_t ffn_dim() const { return 4 * d_model; }
  std::size_t q_dim() const { return num_heads * head_dim; }
  std::size_t kv_dim() const { return num_kv_heads * head_dim; }

  bool operator==(const ModelConfig&) const = default;
};

/// Exactly the ModelConfig field names; unknown or missing keys are rejected.
nlohmann::json to_json(const ModelConfig& config);
ModelConfig config_from_json(const nlohmann::json& j);

}  // namespace claa
