// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <deque>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "claa/forward.hpp"

namespace claa {

/// Per-prompt-token importance; higher means more worth keeping.
struct ImportanceScores {
  std::vector<float> values;
  std::optional<std::size_t> layer;

  std::size_t size() const { return values.size(); }
  float operator[](std::size_t i) const { return values[i]; }
};

/// Knobs shared by every ranking strategy and pipeline.
///
/// Defaults reproduce the reference configuration for a 32-layer model:
/// W=8, pooling kernel 7, pruning/routing layer 15, aggregation window 4,
/// first compressed layer 4, 8 lookahead tokens.
struct RankingParams {
  std::size_t window = 8;                  // observation window W
  std::size_t pool_kernel = 7;             // odd
  double keep_rate = 0.1;                  // (0, 1]
  std::size_t agg_window = 4;              // CLAA n
  std::size_t first_compressed_layer = 4;  // CLAA m
  std::size_t pruning_layer = 15;          // l_p, also FastKV's TSP layer
  std::size_t routing_layer = 15;          // GemFilter r
  std::size_t lookahead = 8;               // speculator k
  std::size_t max_gen = 64;                // oracle N_gen
  std::optional<TokenId> eos_id;           // oracle stop token
  /// Window pipelines always keep the last W prompt tokens, two-pass
  /// pipelines the last token.
  bool force_recent = true;

  /// Throws ConfigError on any violated range, including m <= l_p < num_layers
  /// and r < num_layers.
  void validate(std::size_t num_layers) const;

  /// Layer indices rescaled for shallower models: l_p = r = num_layers/2 - 1,
  /// m = num_layers/8. Identical to the defaults at 32 layers.
  static RankingParams scaled_for(std::size_t num_layers);
};

/// Rolling window of the most recent per-layer scores; evicts oldest first.
class LayerScoreBuffer {
 public:
  explicit LayerScoreBuffer(std::size_t capacity);

  void push(ImportanceScores scores);
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<ImportanceScores>& entries() const { return entries_; }

 private:
  std::size_t capacity_;
  std::deque<ImportanceScores> entries_;
};

/// Raw (pre-softmax) attention of the last prompt token's query, summed
/// over all query heads.
ImportanceScores gemfilter_score(const LayerCapture& layer);
ImportanceScores gemfilter_score(const ForwardTrace& trace, std::size_t layer);

/// Post-softmax attention received from the last W prompt positions, summed
/// over window queries and heads. Each window query's softmax is causal over
/// positions up to its own. Throws InvalidArgument when W > L or W == 0.
ImportanceScores window_score(const LayerCapture& layer, std::size_t window);
ImportanceScores window_score(const ForwardTrace& trace, std::size_t layer, std::size_t window);

/// window_score restricted to the query heads served by KV group `group`,
/// averaged (not summed) over those heads.
ImportanceScores kv_group_score(const LayerCapture& layer, std::size_t window, std::size_t group);

/// S_i = mean over lookahead steps of the max over (layer, head) of raw
/// q_gen . k_i / sqrt(d_k), using the speculator's own prompt keys at every
/// layer. Throws InvalidArgument on an empty lookahead.
ImportanceScores spec_prefill_score(const ForwardTrace& spec_trace, const OracleTrace& lookahead);

/// Answer-informed ranking: the same mean-of-max raw aggregation over every
/// generated token, then pool1d. Throws OracleUndefined when nothing was
/// generated.
ImportanceScores oracle_score(const ForwardTrace& prompt_trace, const OracleTrace& oracle,
                              std::size_t pool_kernel);

/// Elementwise max over the buffered layer scores.
ImportanceScores claa_aggregate(const LayerScoreBuffer& buffer);

/// Centered moving average; windows are clipped at the edges and averaged
/// over in-range entries only.
ImportanceScores pool1d(const ImportanceScores& scores, std::size_t kernel);

/// max(1, round_half_up(keep_rate * L)).
std::size_t keep_count(double keep_rate, std::size_t length);

/// The k best indices (ties to the lower index), always containing
/// `force_include`, returned ascending.
std::vector<std::size_t> topk_indices(const ImportanceScores& scores, std::size_t k,
                                      std::span<const std::size_t> force_include = {});

/// Writes `index,score` rows with a header line.
void write_scores_csv(std::ostream& out, const ImportanceScores& scores);

}  // namespace claa
