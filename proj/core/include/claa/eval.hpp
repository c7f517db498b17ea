// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "claa/pipelines.hpp"
#include "claa/ranking.hpp"

namespace claa {

/// 1-based ranks in ascending value order; tied values share their average rank.
std::vector<double> average_ranks(std::span<const float> values);

/// Spearman's rho as the Pearson correlation of average ranks, which stays
/// exact in the presence of ties. Throws InvalidArgument on length mismatch
/// or length < 2, DegenerateRanking when either side has zero rank variance.
double spearman_rho(const ImportanceScores& a, const ImportanceScores& b);

struct RankCorrelationReport {
  std::string method;
  std::string prompt_id;
  /// layer -> rho; layers where the heuristic is undefined are absent.
  std::map<std::size_t, double> rho;
};

/// Per-layer rank correlation against the answer-informed oracle.
///
/// Every heuristic is re-derived as if each layer were its ranking layer
/// (GemFilter's routing layer, FastKV's window layer, the last layer of
/// CLAA's aggregation window) and pooled with params.pool_kernel. The
/// oracle is pooled by construction. Reports are returned in the order
/// Oracle, GemFilter, FastKV, CLAA. CLAA is absent below m + n - 1.
std::vector<RankCorrelationReport> layerwise_correlation(const Model& model,
                                                         std::span<const TokenId> prompt,
                                                         const RankingParams& params,
                                                         const std::string& prompt_id = "");

/// Synthetic needle-in-a-haystack retrieval task over raw token ids.
///
/// Layout: haystack_len filler tokens with the needle [marker, payload...]
/// inserted after floor(depth * haystack_len) of them, followed by the query
/// span [query, marker]. The expected answer is the payload.
struct NiahTask {
  std::vector<TokenId> prompt;
  std::vector<TokenId> answer;
  std::size_t haystack_len = 0;
  std::size_t needle_start = 0;
  std::size_t needle_len = 0;
  std::size_t query_start = 0;
  double depth = 0.0;
};

struct NiahVocab {
  static constexpr TokenId kEos = 0;
  static constexpr TokenId kMarker = 1;
  static constexpr TokenId kQuery = 2;
  static constexpr TokenId kFirstFiller = 3;
};

/// Deterministic for fixed arguments. Fillers come from [3, vocab/2),
/// payload tokens from [vocab/2, vocab).
NiahTask gen_niah(std::size_t haystack_len, double depth, std::uint64_t seed,
                  std::size_t vocab_size = 512, std::size_t payload_len = 4);

/// 1 iff `expected` occurs contiguously in `generated` (an empty expectation
/// always matches).
int score_exact_match(std::span<const TokenId> generated, std::span<const TokenId> expected);

struct SweepPrompt {
  std::string id;
  std::vector<TokenId> tokens;
  /// Retrieval answer; empty when the prompt has none.
  std::vector<TokenId> expected;
};

struct SweepOptions {
  std::size_t jobs = 1;
  /// Decode budget beyond the expected answer length for retrieval scoring.
  std::size_t extra_decode_steps = 2;
};

struct SweepCell {
  Method method = Method::FullKV;
  double keep_rate = 1.0;            // grid coordinate
  double effective_keep_rate = 1.0;  // 1.0 for FullKV
  std::string prompt_id;
  std::optional<double> score;
  std::optional<double> rho;
  std::size_t kept = 0;
  std::size_t cache_bytes = 0;
  std::vector<std::size_t> cache_lengths;
  std::vector<std::string> contract_violations;
  std::optional<std::string> error;
  double ttft_ms = 0.0;
};

struct SweepReport {
  RankingParams params;
  std::vector<Method> methods;
  std::vector<double> keep_rates;
  std::vector<std::string> prompt_ids;
  /// Ordered method-major, then keep rate, then prompt.
  std::vector<SweepCell> cells;

  bool any_error() const;
  bool contracts_hold() const;
  /// Timing fields are the only run-to-run variable content; leave them out
  /// to get byte-identical reports for equal seeds.
  nlohmann::json to_json(bool include_timing = true) const;
  void write_csv(std::ostream& out, bool include_timing = true) const;
};

/// Runs every (method, keep_rate, prompt) cell. Throws ConfigError for an
/// empty grid, invalid params or a missing speculator; any other failure is
/// recorded on its cell.
SweepReport sweep(const Model& model, const std::vector<SweepPrompt>& prompts,
                  const std::vector<Method>& methods, const std::vector<double>& keep_rates,
                  const RankingParams& params, const Model* speculator = nullptr,
                  const SweepOptions& options = {});

nlohmann::json params_to_json(const RankingParams& params);

}  // namespace claa
