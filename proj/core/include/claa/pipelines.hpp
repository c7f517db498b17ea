// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "claa/forward.hpp"
#include "claa/ranking.hpp"

namespace claa {

enum class Method { FullKV, GemFilter, FastKV, SpecPrefill, Oracle2Pass, OracleEmulated, CLAA };

std::string_view method_name(Method m);
/// Case-insensitive; accepts the names returned by method_name().
std::optional<Method> parse_method(std::string_view name);
const std::vector<Method>& all_methods();

/// Rank in a partial pass, then re-run the model on the kept tokens.
bool is_two_pass(Method m);
/// Compress caches in flight and prune hidden states at the pruning layer.
bool is_single_pass(Method m);

struct PipelineConfig {
  Method method = Method::FullKV;
  RankingParams params;
  const Model* speculator = nullptr;  // required by SpecPrefill
};

struct PrefillResult {
  std::vector<float> next_logits;
  KvCache kv;
  std::vector<std::size_t> kept_indices;
  /// Scores computed at each layer (window scores for FastKV/CLAA, the
  /// routing-layer score for GemFilter).
  std::map<std::size_t, ImportanceScores> per_layer_scores;
  /// The final (pooled) scores the kept set was selected from; absent for
  /// FullKV.
  std::optional<ImportanceScores> ranking;
  double prefill_ms = 0.0;
};

PrefillResult full_prefill(const Model& model, std::span<const TokenId> prompt);
PrefillResult gemfilter_prefill(const Model& model, std::span<const TokenId> prompt,
                                const RankingParams& params);
PrefillResult fastkv_prefill(const Model& model, std::span<const TokenId> prompt,
                             const RankingParams& params);
PrefillResult speculative_prefill(const Model& base, const Model& speculator,
                                  std::span<const TokenId> prompt, const RankingParams& params);
/// Full prefill, greedy generation of up to max_gen tokens, oracle_score over
/// every layer and head. Throws OracleUndefined if the first token is EOS.
ImportanceScores oracle_ranking(const Model& model, std::span<const TokenId> prompt,
                                const RankingParams& params);
PrefillResult oracle_prefill(const Model& model, std::span<const TokenId> prompt,
                             const ImportanceScores& scores, const RankingParams& params);
/// Single-pass replay of precomputed oracle scores: every layer up to the
/// pruning layer caches the same top-k set, hidden states are pruned there.
PrefillResult oracle_emulation_prefill(const Model& model, std::span<const TokenId> prompt,
                                       const ImportanceScores& scores, const RankingParams& params);
PrefillResult claa_prefill(const Model& model, std::span<const TokenId> prompt,
                           const RankingParams& params);

/// Dispatches on cfg.method. Oracle methods require `oracle_scores`.
PrefillResult run_prefill(const Model& model, std::span<const TokenId> prompt,
                          const PipelineConfig& cfg, const ImportanceScores* oracle_scores = nullptr);

/// Greedy decoding from the prefill cache; new tokens are cached uncompressed
/// at positions continuing from the prompt length. Returns `steps` tokens.
std::vector<TokenId> decode(const Model& model, const PrefillResult& result, std::size_t steps);

/// Indices forced into every kept set for `method` on a prompt of `length`.
std::vector<std::size_t> forced_indices(Method method, const RankingParams& params, std::size_t length);

/// Verifies per-layer cache lengths and index-set structure for `method`.
/// Returns human-readable violations (empty when the contract holds).
std::vector<std::string> check_architecture(Method method, const PrefillResult& result,
                                            const RankingParams& params, std::size_t prompt_len,
                                            std::size_t num_layers);

/// method, keep_rate, kept_indices, timings, cache bytes per layer.
nlohmann::json summarize(const PrefillResult& result, Method method, double keep_rate);

}  // namespace claa
