// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "claa/kv_cache.hpp"
#include "claa/model.hpp"

namespace claa {

/// Token ids paired with the position ids they are embedded at. After pruning
/// the positions are the surviving subsequence of 0..L-1.
struct TokenSequence {
  std::vector<TokenId> tokens;
  std::vector<Position> positions;

  static TokenSequence from_tokens(std::span<const TokenId> tokens);
  std::size_t size() const { return tokens.size(); }
  /// Subsequence at ascending `indices` (indices into this sequence).
  TokenSequence gather(std::span<const std::size_t> indices) const;
  void validate() const;
};

/// Post-rotary queries and keys of one layer over the forward sequence.
/// queries: [H][len][d_k], keys: [G][len][d_k].
struct LayerCapture {
  std::size_t num_heads = 0;
  std::size_t num_kv_heads = 0;
  std::size_t head_dim = 0;
  std::size_t length = 0;
  std::vector<float> queries;
  std::vector<float> keys;

  std::size_t group_of(std::size_t head) const { return head / (num_heads / num_kv_heads); }
  std::span<const float> query(std::size_t head, std::size_t i) const {
    return {queries.data() + (head * length + i) * head_dim, head_dim};
  }
  std::span<const float> key(std::size_t group, std::size_t i) const {
    return {keys.data() + (group * length + i) * head_dim, head_dim};
  }
};

/// LayerCapture plus values ([G][len][d_k]); the full output of a projection.
struct LayerActivations {
  LayerCapture qk;
  std::vector<float> values;

  std::span<const float> value(std::size_t group, std::size_t i) const {
    return {values.data() + (group * qk.length + i) * qk.head_dim, qk.head_dim};
  }
};

/// Captured per-layer queries/keys for a prompt forward pass.
struct ForwardTrace {
  std::map<std::size_t, LayerCapture> layers;

  bool has(std::size_t layer) const { return layers.contains(layer); }
  /// Throws InvalidArgument when the layer was not captured.
  const LayerCapture& at(std::size_t layer) const;
};

/// Queries recorded while greedily generating past a prompt.
/// queries[step] is [num_layers][H][d_k].
struct OracleTrace {
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t head_dim = 0;
  std::vector<TokenId> tokens;
  std::vector<std::vector<float>> queries;

  std::size_t steps() const { return tokens.size(); }
  std::span<const float> query(std::size_t step, std::size_t layer, std::size_t head) const {
    return {queries[step].data() + (layer * num_heads + head) * head_dim, head_dim};
  }
};

/// out[i][j] = dot(Q[i], K[j]) / sqrt(d_k). Q and K are [n][d_k]; no masking.
Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t head_dim);

/// Row-wise numerically stable softmax. With `causal_offset`, entry (i, j)
/// for j > i + offset is masked to probability 0.
Tensor softmax_rows(Tensor scores, std::optional<std::size_t> causal_offset = std::nullopt);

/// Interleaved-pair rotary embedding applied in place to one head vector.
void apply_rotary(std::span<float> vec, Position pos, double theta);

/// Embeds, projects and rotates; the per-layer building blocks of every
/// forward path. `hidden` is [n][d_model].
Tensor embed_tokens(const Model& model, std::span<const TokenId> tokens);
LayerActivations project_qkv(const Model& model, std::size_t layer, const Tensor& hidden,
                             std::span<const Position> positions);
/// Attention (causal within the current block, every `past` entry visible),
/// output projection and feed-forward, with both residual adds.
void complete_layer(const Model& model, std::size_t layer, Tensor& hidden,
                    const LayerActivations& acts, const KvLayer* past = nullptr);
std::vector<float> logits_for_row(const Model& model, const Tensor& hidden, std::size_t row);

KvLayer kv_from_activations(const LayerActivations& acts, std::span<const Position> positions);
/// Per-group gather: `indices[g]` are ascending rows of the current block.
KvLayer gather_kv(const LayerActivations& acts, std::span<const Position> positions,
                  const std::vector<std::vector<std::size_t>>& indices);
/// Same row subset for every group.
KvLayer gather_kv(const LayerActivations& acts, std::span<const Position> positions,
                  std::span<const std::size_t> indices);

/// Layer-by-layer prefill driver. Pipelines use it directly to interleave
/// scoring, cache compression and sequence pruning with the forward pass.
class LayerRunner {
 public:
  LayerRunner(const Model& model, TokenSequence seq);

  std::size_t layer() const { return layer_; }
  bool done() const { return layer_ == model_->config.num_layers; }
  const TokenSequence& sequence() const { return seq_; }
  const Tensor& hidden() const { return hidden_; }

  /// Queries, keys and values of the current layer.
  LayerActivations project() const;
  /// Runs the current layer with the full block's keys/values and stores
  /// `cache` as that layer's entry. Hidden states are never affected by the
  /// choice of `cache`.
  void advance(const LayerActivations& acts, KvLayer cache);
  /// Keeps only `indices` (ascending, into the current sequence) of the
  /// hidden states for the remaining layers.
  void prune(std::span<const std::size_t> indices);

  std::vector<float> last_logits() const;
  Tensor all_logits() const;
  KvCache take_cache(Position next_position);

 private:
  const Model* model_;
  TokenSequence seq_;
  Tensor hidden_;
  std::size_t layer_ = 0;
  std::vector<KvLayer> cache_;
};

/// Called after each layer's attention; returning a KvLayer replaces the
/// stored cache for that layer. Must not (and cannot) alter hidden states.
using CompressHook = std::function<std::optional<KvLayer>(
    std::size_t layer, const LayerActivations& acts, const TokenSequence& seq)>;

struct ForwardOptions {
  std::set<std::size_t> capture;
  CompressHook compress_hook;
  bool all_logits = true;
};

struct ForwardOutput {
  Tensor logits;  // [len][vocab], or [1][vocab] (last row) when !all_logits
  KvCache kv;
  ForwardTrace trace;
};

/// Standard pre-norm decoder forward. Rotary positions come from
/// `seq.positions`, so a pruned sequence keeps its original positions.
ForwardOutput full_forward(const Model& model, const TokenSequence& seq,
                           const ForwardOptions& options = {});

/// Runs one token at kv.next_position, appending its keys/values to every
/// layer. Writes that token's queries ([num_layers][H][d_k]) when `queries`
/// is non-null. Returns next-token logits.
std::vector<float> decode_step(const Model& model, KvCache& kv, TokenId token,
                               std::vector<float>* queries = nullptr);

/// Lowest index among the maximal logits.
TokenId argmax_token(std::span<const float> logits);

/// Greedy continuation: pick argmax of the current logits; stop before
/// storing it if it equals `eos_id`; otherwise record it, run it through the
/// model and record its queries. At most `max_gen` tokens.
OracleTrace greedy_generate(const Model& model, KvCache& kv, std::vector<float> last_logits,
                            std::size_t max_gen, std::optional<TokenId> eos_id);

}  // namespace claa
