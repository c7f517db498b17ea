// SPDX-License-Identifier: Apache-2.0
#include "claa/forward.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "claa/error.hpp"
#include "kernels.hpp"

namespace claa {

TokenSequence TokenSequence::from_tokens(std::span<const TokenId> tokens) {
  TokenSequence s;
  s.tokens.assign(tokens.begin(), tokens.end());
  s.positions.resize(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) s.positions[i] = static_cast<Position>(i);
  return s;
}

TokenSequence TokenSequence::gather(std::span<const std::size_t> indices) const {
  TokenSequence s;
  s.tokens.reserve(indices.size());
  s.positions.reserve(indices.size());
  for (auto i : indices) {
    if (i >= size()) throw InvalidArgument("gather index out of range");
    s.tokens.push_back(tokens[i]);
    s.positions.push_back(positions[i]);
  }
  return s;
}

void TokenSequence::validate() const {
  if (tokens.size() != positions.size()) throw InvalidArgument("tokens/positions length differ");
  for (std::size_t i = 0; i < positions.size(); ++i) {
    if (positions[i] < 0) throw InvalidArgument("negative position id");
    if (i && positions[i] <= positions[i - 1]) {
      throw InvalidArgument("position ids must be strictly increasing");
    }
  }
}

const LayerCapture& ForwardTrace::at(std::size_t layer) const {
  auto it = layers.find(layer);
  if (it == layers.end()) throw InvalidArgument("layer " + std::to_string(layer) + " not captured");
  return it->second;
}

Tensor attention_scores(const Tensor& q, const Tensor& k, std::size_t head_dim) {
  if (q.cols() != head_dim || k.cols() != head_dim) {
    throw InvalidArgument("attention_scores: dimension mismatch");
  }
  const float scale = 1.0f / std::sqrt(static_cast<float>(head_dim));
  Tensor out({q.rows(), k.rows()});
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto qi = q.row(i);
    for (std::size_t j = 0; j < k.rows(); ++j) {
      const auto kj = k.row(j);
      float dot = 0.0f;
      for (std::size_t d = 0; d < head_dim; ++d) dot += qi[d] * kj[d];
      out.at(i, j) = dot * scale;
    }
  }
  return out;
}

Tensor softmax_rows(Tensor scores, std::optional<std::size_t> causal_offset) {
  const std::size_t cols = scores.cols();
  if (cols == 0) throw InvalidArgument("softmax_rows: empty row");
  for (std::size_t i = 0; i < scores.rows(); ++i) {
    auto row = scores.row(i);
    const std::size_t visible =
        causal_offset ? std::min(cols, i + *causal_offset + 1) : cols;
    const float m = *std::max_element(row.begin(), row.begin() + visible);
    double sum = 0.0;
    for (std::size_t j = 0; j < visible; ++j) {
      row[j] = std::exp(row[j] - m);
      sum += row[j];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (std::size_t j = 0; j < visible; ++j) row[j] *= inv;
    for (std::size_t j = visible; j < cols; ++j) row[j] = 0.0f;
  }
  return scores;
}

void apply_rotary(std::span<float> vec, Position pos, double theta) {
  const std::size_t dk = vec.size();
  for (std::size_t i = 0; i < dk / 2; ++i) {
    const double freq = std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(dk));
    const double angle = static_cast<double>(pos) * freq;
    const float c = static_cast<float>(std::cos(angle));
    const float s = static_cast<float>(std::sin(angle));
    const float x0 = vec[2 * i];
    const float x1 = vec[2 * i + 1];
    vec[2 * i] = x0 * c - x1 * s;
    vec[2 * i + 1] = x0 * s + x1 * c;
  }
}

Tensor embed_tokens(const Model& model, std::span<const TokenId> tokens) {
  const auto& c = model.config;
  Tensor h({tokens.size(), c.d_model});
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const TokenId t = tokens[i];
    if (t < 0 || static_cast<std::size_t>(t) >= c.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(t) + " out of range");
    }
    const auto src = model.embed.row(static_cast<std::size_t>(t));
    std::copy(src.begin(), src.end(), h.row(i).begin());
  }
  return h;
}

namespace {

void check_positions(const ModelConfig& c, std::span<const Position> positions) {
  for (auto p : positions) {
    if (p < 0 || static_cast<std::size_t>(p) >= c.max_position) {
      throw InvalidArgument("position id " + std::to_string(p) + " overflows max_position");
    }
  }
}

// [n][heads][dk] -> [heads][n][dk] with rotary applied at each row's position.
void split_heads_rotary(const std::vector<float>& flat, std::size_t n, std::size_t heads,
                        std::size_t dk, std::span<const Position> positions, double theta,
                        bool rotate, std::vector<float>& out) {
  out.resize(heads * n * dk);
  std::vector<float> cs(dk), sn(dk);
  for (std::size_t i = 0; i < n; ++i) {
    if (rotate) {
      for (std::size_t p = 0; p < dk / 2; ++p) {
        const double freq = std::pow(theta, -2.0 * static_cast<double>(p) / static_cast<double>(dk));
        const double angle = static_cast<double>(positions[i]) * freq;
        cs[p] = static_cast<float>(std::cos(angle));
        sn[p] = static_cast<float>(std::sin(angle));
      }
    }
    for (std::size_t h = 0; h < heads; ++h) {
      const float* src = flat.data() + (i * heads + h) * dk;
      float* dst = out.data() + (h * n + i) * dk;
      if (!rotate) {
        std::copy(src, src + dk, dst);
        continue;
      }
      for (std::size_t p = 0; p < dk / 2; ++p) {
        const float x0 = src[2 * p];
        const float x1 = src[2 * p + 1];
        dst[2 * p] = x0 * cs[p] - x1 * sn[p];
        dst[2 * p + 1] = x0 * sn[p] + x1 * cs[p];
      }
    }
  }
}

}  // namespace

LayerActivations project_qkv(const Model& model, std::size_t layer, const Tensor& hidden,
                             std::span<const Position> positions) {
  const auto& c = model.config;
  const auto& w = model.layers.at(layer);
  const std::size_t n = hidden.rows();
  if (positions.size() != n) throw InvalidArgument("positions/hidden length differ");
  check_positions(c, positions);

  std::vector<float> xn(n * c.d_model);
  detail::rms_norm(hidden.data.data(), n, c.d_model, w.attn_norm.data.data(), xn.data());
  std::vector<float> q(n * c.q_dim()), k(n * c.kv_dim()), v(n * c.kv_dim());
  detail::matmul(xn.data(), n, w.wq, q.data());
  detail::matmul(xn.data(), n, w.wk, k.data());
  detail::matmul(xn.data(), n, w.wv, v.data());

  LayerActivations acts;
  acts.qk.num_heads = c.num_heads;
  acts.qk.num_kv_heads = c.num_kv_heads;
  acts.qk.head_dim = c.head_dim;
  acts.qk.length = n;
  split_heads_rotary(q, n, c.num_heads, c.head_dim, positions, c.rope_theta, true, acts.qk.queries);
  split_heads_rotary(k, n, c.num_kv_heads, c.head_dim, positions, c.rope_theta, true, acts.qk.keys);
  split_heads_rotary(v, n, c.num_kv_heads, c.head_dim, positions, c.rope_theta, false, acts.values);
  return acts;
}

void complete_layer(const Model& model, std::size_t layer, Tensor& hidden,
                    const LayerActivations& acts, const KvLayer* past) {
  const auto& c = model.config;
  const auto& w = model.layers.at(layer);
  const std::size_t n = hidden.rows();
  const std::size_t d = c.d_model;
  const std::size_t f = c.ffn_dim();

  std::vector<float> attn(n * c.q_dim());
  detail::attention(acts, past, attn.data());
  std::vector<float> proj(n * d);
  detail::matmul(attn.data(), n, w.wo, proj.data());
  for (std::size_t i = 0; i < n * d; ++i) hidden.data[i] += proj[i];

  std::vector<float> xn(n * d);
  detail::rms_norm(hidden.data.data(), n, d, w.ffn_norm.data.data(), xn.data());
  std::vector<float> gate(n * f), up(n * f);
  detail::matmul(xn.data(), n, w.w_gate, gate.data());
  detail::matmul(xn.data(), n, w.w_up, up.data());
  for (std::size_t i = 0; i < n * f; ++i) {
    const float z = gate[i];
    gate[i] = z / (1.0f + std::exp(-z)) * up[i];
  }
  detail::matmul(gate.data(), n, w.w_down, proj.data());
  for (std::size_t i = 0; i < n * d; ++i) hidden.data[i] += proj[i];
}

std::vector<float> logits_for_row(const Model& model, const Tensor& hidden, std::size_t row) {
  const auto& c = model.config;
  std::vector<float> xn(c.d_model);
  detail::rms_norm(hidden.row(row).data(), 1, c.d_model, model.final_norm.data.data(), xn.data());
  std::vector<float> logits(c.vocab_size);
  detail::matmul(xn.data(), 1, model.lm_head, logits.data());
  return logits;
}

KvLayer kv_from_activations(const LayerActivations& acts, std::span<const Position> positions) {
  const auto& qk = acts.qk;
  KvLayer layer;
  layer.groups.resize(qk.num_kv_heads);
  const std::size_t span = qk.length * qk.head_dim;
  for (std::size_t g = 0; g < qk.num_kv_heads; ++g) {
    auto& grp = layer.groups[g];
    grp.keys.assign(qk.keys.begin() + g * span, qk.keys.begin() + (g + 1) * span);
    grp.values.assign(acts.values.begin() + g * span, acts.values.begin() + (g + 1) * span);
    grp.positions.assign(positions.begin(), positions.end());
  }
  return layer;
}

KvLayer gather_kv(const LayerActivations& acts, std::span<const Position> positions,
                  const std::vector<std::vector<std::size_t>>& indices) {
  const auto& qk = acts.qk;
  if (indices.size() != qk.num_kv_heads) throw InvalidArgument("gather_kv: one index list per group");
  KvLayer layer;
  layer.groups.resize(qk.num_kv_heads);
  for (std::size_t g = 0; g < qk.num_kv_heads; ++g) {
    auto& grp = layer.groups[g];
    grp.keys.reserve(indices[g].size() * qk.head_dim);
    grp.values.reserve(indices[g].size() * qk.head_dim);
    for (auto i : indices[g]) {
      if (i >= qk.length) throw InvalidArgument("gather_kv: index out of range");
      grp.append(qk.key(g, i), acts.value(g, i), positions[i]);
    }
  }
  return layer;
}

KvLayer gather_kv(const LayerActivations& acts, std::span<const Position> positions,
                  std::span<const std::size_t> indices) {
  std::vector<std::vector<std::size_t>> per_group(
      acts.qk.num_kv_heads, std::vector<std::size_t>(indices.begin(), indices.end()));
  return gather_kv(acts, positions, per_group);
}

LayerRunner::LayerRunner(const Model& model, TokenSequence seq)
    : model_(&model), seq_(std::move(seq)) {
  seq_.validate();
  if (seq_.size() == 0) throw InvalidArgument("empty token sequence");
  check_positions(model.config, seq_.positions);
  hidden_ = embed_tokens(model, seq_.tokens);
  cache_.reserve(model.config.num_layers);
}

LayerActivations LayerRunner::project() const {
  return project_qkv(*model_, layer_, hidden_, seq_.positions);
}

void LayerRunner::advance(const LayerActivations& acts, KvLayer cache) {
  complete_layer(*model_, layer_, hidden_, acts);
  cache_.push_back(std::move(cache));
  ++layer_;
}

void LayerRunner::prune(std::span<const std::size_t> indices) {
  Tensor pruned({indices.size(), model_->config.d_model});
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= seq_.size()) throw InvalidArgument("prune index out of range");
    const auto src = hidden_.row(indices[r]);
    std::copy(src.begin(), src.end(), pruned.row(r).begin());
  }
  seq_ = seq_.gather(indices);
  hidden_ = std::move(pruned);
}

std::vector<float> LayerRunner::last_logits() const {
  return logits_for_row(*model_, hidden_, hidden_.rows() - 1);
}

Tensor LayerRunner::all_logits() const {
  const auto& c = model_->config;
  Tensor logits({hidden_.rows(), c.vocab_size});
  for (std::size_t r = 0; r < hidden_.rows(); ++r) {
    const auto row = logits_for_row(*model_, hidden_, r);
    std::copy(row.begin(), row.end(), logits.row(r).begin());
  }
  return logits;
}

KvCache LayerRunner::take_cache(Position next_position) {
  KvCache kv;
  kv.head_dim = model_->config.head_dim;
  kv.layers = std::move(cache_);
  kv.next_position = next_position;
  cache_.clear();
  return kv;
}

ForwardOutput full_forward(const Model& model, const TokenSequence& seq,
                           const ForwardOptions& options) {
  for (auto l : options.capture) {
    if (l >= model.config.num_layers) throw InvalidArgument("capture layer out of range");
  }
  LayerRunner runner(model, seq);
  ForwardOutput out;
  while (!runner.done()) {
    const std::size_t l = runner.layer();
    LayerActivations acts = runner.project();
    std::optional<KvLayer> replaced;
    if (options.compress_hook) replaced = options.compress_hook(l, acts, runner.sequence());
    KvLayer entry = replaced ? std::move(*replaced) : kv_from_activations(acts, runner.sequence().positions);
    runner.advance(acts, std::move(entry));
    if (options.capture.contains(l)) out.trace.layers.emplace(l, std::move(acts.qk));
  }
  if (options.all_logits) {
    out.logits = runner.all_logits();
  } else {
    const auto last = runner.last_logits();
    out.logits = Tensor({1, last.size()});
    std::copy(last.begin(), last.end(), out.logits.data.begin());
  }
  out.kv = runner.take_cache(seq.positions.back() + 1);
  return out;
}

std::vector<float> decode_step(const Model& model, KvCache& kv, TokenId token,
                               std::vector<float>* queries) {
  const auto& c = model.config;
  if (kv.layers.size() != c.num_layers) throw InvalidArgument("decode_step: cache/model layer mismatch");
  const TokenId tok[1] = {token};
  const Position pos[1] = {kv.next_position};
  Tensor hidden = embed_tokens(model, tok);
  if (queries) queries->assign(c.num_layers * c.num_heads * c.head_dim, 0.0f);
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    LayerActivations acts = project_qkv(model, l, hidden, pos);
    complete_layer(model, l, hidden, acts, &kv.layers[l]);
    for (std::size_t g = 0; g < c.num_kv_heads; ++g) {
      kv.layers[l].groups[g].append(acts.qk.key(g, 0), acts.value(g, 0), pos[0]);
    }
    if (queries) {
      std::copy(acts.qk.queries.begin(), acts.qk.queries.end(),
                queries->begin() + static_cast<std::ptrdiff_t>(l * c.num_heads * c.head_dim));
    }
  }
  ++kv.next_position;
  return logits_for_row(model, hidden, 0);
}

TokenId argmax_token(std::span<const float> logits) {
  if (logits.empty()) throw InvalidArgument("argmax of empty logits");
  // max_element returns the first maximum, i.e. the lowest token id on ties.
  return static_cast<TokenId>(std::max_element(logits.begin(), logits.end()) - logits.begin());
}

OracleTrace greedy_generate(const Model& model, KvCache& kv, std::vector<float> last_logits,
                            std::size_t max_gen, std::optional<TokenId> eos_id) {
  if (max_gen == 0) throw InvalidArgument("max_gen must be >= 1");
  const auto& c = model.config;
  OracleTrace trace;
  trace.num_layers = c.num_layers;
  trace.num_heads = c.num_heads;
  trace.head_dim = c.head_dim;
  std::vector<float> logits = std::move(last_logits);
  while (trace.tokens.size() < max_gen) {
    const TokenId t = argmax_token(logits);
    if (eos_id && t == *eos_id) break;
    trace.tokens.push_back(t);
    std::vector<float> q;
    logits = decode_step(model, kv, t, &q);
    trace.queries.push_back(std::move(q));
  }
  return trace;
}

}  // namespace claa
