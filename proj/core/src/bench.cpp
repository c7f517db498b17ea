// SPDX-License-Identifier: Apache-2.0
#include "claa/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>

#include "claa/error.hpp"

namespace claa {

namespace {
using Clock = std::chrono::steady_clock;
}

double median(std::vector<double> values) {
  if (values.empty()) throw InvalidArgument("median of empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double BenchReport::noise_band() const {
  return ttft_ms > 0.0 ? (ttft_max_ms - ttft_min_ms) / ttft_ms : 0.0;
}

nlohmann::json BenchReport::to_json() const {
  nlohmann::json j{{"method", method},
                   {"prompt_len", prompt_len},
                   {"keep_rate", keep_rate},
                   {"repeats", repeats},
                   {"ttft_ms", {{"median", ttft_ms}, {"min", ttft_min_ms}, {"max", ttft_max_ms}}},
                   {"ttft_samples_ms", ttft_samples_ms},
                   {"noise_band", noise_band()},
                   {"cache_bytes", cache_bytes},
                   {"bytes_per_element", sizeof(float)}};
  j["decode_tps"] = decode_tps ? nlohmann::json(*decode_tps) : nlohmann::json(nullptr);
  return j;
}

std::string BenchReport::csv_header() {
  return "method,prompt_len,keep_rate,repeats,ttft_median_ms,ttft_min_ms,ttft_max_ms,decode_tps,cache_bytes";
}

std::string BenchReport::csv_row() const {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%s,%zu,%.6g,%zu,%.6f,%.6f,%.6f,", method.c_str(), prompt_len, keep_rate,
                repeats, ttft_ms, ttft_min_ms, ttft_max_ms);
  std::string row = buf;
  if (decode_tps) {
    std::snprintf(buf, sizeof buf, "%.6f", *decode_tps);
    row += buf;
  }
  return row + "," + std::to_string(cache_bytes);
}

BenchReport measure_ttft(const Model& model, std::span<const TokenId> prompt, const PipelineConfig& cfg,
                         std::size_t repeats, const ImportanceScores* oracle_scores) {
  if (repeats < 3) throw InvalidArgument("measure_ttft: repeats must be >= 3");
  BenchReport report;
  report.method = std::string(method_name(cfg.method));
  report.prompt_len = prompt.size();
  report.keep_rate = cfg.method == Method::FullKV ? 1.0 : cfg.params.keep_rate;
  report.repeats = repeats;

  PrefillResult last = run_prefill(model, prompt, cfg, oracle_scores);  // warm-up
  for (std::size_t i = 0; i < repeats; ++i) {
    const auto start = Clock::now();
    last = run_prefill(model, prompt, cfg, oracle_scores);
    report.ttft_samples_ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  report.ttft_ms = median(report.ttft_samples_ms);
  report.ttft_min_ms = *std::min_element(report.ttft_samples_ms.begin(), report.ttft_samples_ms.end());
  report.ttft_max_ms = *std::max_element(report.ttft_samples_ms.begin(), report.ttft_samples_ms.end());
  report.cache_bytes = kv_cache_bytes(last.kv);
  return report;
}

double measure_decode_tps(const Model& model, const PrefillResult& result, std::size_t steps,
                          std::size_t repeats) {
  if (steps < 16) throw InvalidArgument("measure_decode_tps: steps must be >= 16");
  if (repeats < 1) throw InvalidArgument("measure_decode_tps: repeats must be >= 1");
  std::vector<double> rates;
  for (std::size_t r = 0; r < repeats; ++r) {
    KvCache kv = result.kv;
    std::vector<float> logits = result.next_logits;
    const auto start = Clock::now();
    for (std::size_t i = 0; i < steps; ++i) logits = decode_step(model, kv, argmax_token(logits));
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    rates.push_back(static_cast<double>(steps) / secs);
  }
  return median(rates);
}

std::size_t kv_cache_bytes(const KvCache& kv) {
  std::size_t total = 0;
  for (const auto& layer : kv.layers) total += kv_layer_bytes(layer, kv.head_dim);
  return total;
}

}  // namespace claa
