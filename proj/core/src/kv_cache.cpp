// SPDX-License-Identifier: Apache-2.0
#include "claa/kv_cache.hpp"

#include <string>

#include "claa/error.hpp"

namespace claa {

void KvGroup::append(std::span<const float> key, std::span<const float> value, Position pos) {
  keys.insert(keys.end(), key.begin(), key.end());
  values.insert(values.end(), value.begin(), value.end());
  positions.push_back(pos);
}

bool KvLayer::uniform() const {
  for (const auto& g : groups) {
    if (g.positions != groups.front().positions) return false;
  }
  return true;
}

void KvCache::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    for (const auto& g : layer.groups) {
      const std::string where = "kv layer " + std::to_string(l);
      if (g.keys.size() != g.size() * head_dim || g.values.size() != g.size() * head_dim) {
        throw InvalidArgument(where + ": keys/values/positions length disagree");
      }
      if (g.size() != layer.length()) throw InvalidArgument(where + ": group lengths differ");
      for (std::size_t i = 1; i < g.positions.size(); ++i) {
        if (g.positions[i] <= g.positions[i - 1]) {
          throw InvalidArgument(where + ": positions not strictly increasing");
        }
      }
    }
  }
}

std::size_t kv_layer_bytes(const KvLayer& layer, std::size_t head_dim) {
  std::size_t total = 0;
  for (const auto& g : layer.groups) total += 2 * g.size() * head_dim * sizeof(float);
  return total;
}

}  // namespace claa
