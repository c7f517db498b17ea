// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "claa/pipelines.hpp"

namespace claa {

/// Timing summary for one (method, prompt length, keep rate) configuration.
struct BenchReport {
  std::string method;
  std::size_t prompt_len = 0;
  double keep_rate = 1.0;
  std::size_t repeats = 0;
  std::vector<double> ttft_samples_ms;
  double ttft_ms = 0.0;  // median
  double ttft_min_ms = 0.0;
  double ttft_max_ms = 0.0;
  std::optional<double> decode_tps;
  std::size_t cache_bytes = 0;

  /// (max - min) / median of the TTFT samples.
  double noise_band() const;
  nlohmann::json to_json() const;
  static std::string csv_header();
  std::string csv_row() const;
};

/// Median wall time from prompt submission to next-token logits, scoring
/// overhead included. One untimed warm-up precedes `repeats` timed runs.
/// Throws InvalidArgument when repeats < 3.
BenchReport measure_ttft(const Model& model, std::span<const TokenId> prompt,
                         const PipelineConfig& cfg, std::size_t repeats,
                         const ImportanceScores* oracle_scores = nullptr);

/// Median over `repeats` of steps / seconds for a greedy decode loop starting
/// from `result`'s cache. Throws InvalidArgument when steps < 16.
double measure_decode_tps(const Model& model, const PrefillResult& result, std::size_t steps,
                          std::size_t repeats = 3);

/// Sum over layers of 2 * G * len_l * d_k * 4 bytes.
std::size_t kv_cache_bytes(const KvCache& kv);

double median(std::vector<double> values);

}  // namespace claa
