// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>

namespace claa::detail {

// mt19937_64's output sequence is fixed by the standard; the distributions in
// <random> are not, so the mappings below are spelled out.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform in [lo, hi) with 24 bits of resolution.
  float uniform(float lo, float hi) {
    const double unit = static_cast<double>(engine_() >> 40) * 0x1.0p-24;
    return static_cast<float>(lo + (hi - lo) * unit);
  }

  /// Uniform integer in [lo, hi). Modulo bias is negligible for small ranges.
  std::uint64_t below(std::uint64_t lo, std::uint64_t hi) { return lo + engine_() % (hi - lo); }

  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace claa::detail
