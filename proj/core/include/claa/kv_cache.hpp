// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "claa/config.hpp"

namespace claa {

/// Cached keys and values for one KV head group at one layer.
/// `keys`/`values` are row-major [len][head_dim]; keys are post-rotary.
struct KvGroup {
  std::vector<float> keys;
  std::vector<float> values;
  std::vector<Position> positions;

  std::size_t size() const { return positions.size(); }
  void append(std::span<const float> key, std::span<const float> value, Position pos);
};

/// One layer's cache. Groups may hold different token subsets but always the
/// same number of entries.
struct KvLayer {
  std::vector<KvGroup> groups;

  std::size_t length() const { return groups.empty() ? 0 : groups.front().size(); }
  /// True when every group caches the same positions.
  bool uniform() const;
};

struct KvCache {
  std::size_t head_dim = 0;
  std::vector<KvLayer> layers;
  /// Position assigned to the next appended token (the original prompt length
  /// after prefill, regardless of compression).
  Position next_position = 0;

  /// Throws InvalidArgument if keys/values/positions disagree in length,
  /// group lengths differ within a layer, or positions are not strictly
  /// increasing.
  void validate() const;
};

/// Bytes held by one layer: 2 (keys and values) * G * len * d_k * 4.
std::size_t kv_layer_bytes(const KvLayer& layer, std::size_t head_dim);

}  // namespace claa
