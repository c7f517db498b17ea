// SPDX-License-Identifier: Apache-2.0
#include "claa/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <string>

#include "claa/error.hpp"

namespace claa {

void RankingParams::validate(std::size_t num_layers) const {
  auto fail = [](const std::string& msg) { throw ConfigError("ranking params: " + msg); };
  if (window < 1) fail("window must be >= 1");
  if (pool_kernel < 1 || pool_kernel % 2 == 0) fail("pool_kernel must be odd and >= 1");
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) fail("keep_rate must be in (0, 1]");
  if (agg_window < 1) fail("agg_window (n) must be >= 1");
  if (pruning_layer >= num_layers) {
    fail("pruning_layer " + std::to_string(pruning_layer) + " must be < num_layers " +
         std::to_string(num_layers));
  }
  if (first_compressed_layer > pruning_layer) fail("first_compressed_layer (m) must be <= pruning_layer");
  if (routing_layer >= num_layers) fail("routing_layer must be < num_layers");
  if (lookahead < 1) fail("lookahead must be >= 1");
  if (max_gen < 1) fail("max_gen must be >= 1");
}

RankingParams RankingParams::scaled_for(std::size_t num_layers) {
  RankingParams p;
  const std::size_t lp = num_layers >= 2 ? num_layers / 2 - 1 : 0;
  p.pruning_layer = lp;
  p.routing_layer = lp;
  p.first_compressed_layer = std::min(num_layers / 8, lp);
  return p;
}

LayerScoreBuffer::LayerScoreBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw InvalidArgument("LayerScoreBuffer capacity must be >= 1");
}

void LayerScoreBuffer::push(ImportanceScores scores) {
  if (entries_.size() == capacity_) entries_.pop_front();
  entries_.push_back(std::move(scores));
}

namespace {

float dot(std::span<const float> a, std::span<const float> b) {
  float s = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Causal softmax of window query j of head h over keys 0..j, added into out.
void add_window_row(const LayerCapture& layer, std::size_t head, std::size_t j, float scale,
                    std::vector<float>& row, std::vector<float>& out) {
  const std::size_t g = layer.group_of(head);
  const auto q = layer.query(head, j);
  row.resize(j + 1);
  float m = -std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i <= j; ++i) {
    row[i] = dot(q, layer.key(g, i)) * scale;
    m = std::max(m, row[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i <= j; ++i) {
    row[i] = std::exp(row[i] - m);
    sum += row[i];
  }
  const float inv = static_cast<float>(1.0 / sum);
  for (std::size_t i = 0; i <= j; ++i) out[i] += row[i] * inv;
}

void check_window(const LayerCapture& layer, std::size_t window) {
  if (window == 0) throw InvalidArgument("observation window must be >= 1");
  if (window > layer.length) {
    throw InvalidArgument("observation window " + std::to_string(window) +
                          " exceeds prompt length " + std::to_string(layer.length));
  }
}

// Window score of a single query head.
std::vector<float> head_window_score(const LayerCapture& layer, std::size_t window, std::size_t head) {
  const std::size_t len = layer.length;
  const float scale = 1.0f / std::sqrt(static_cast<float>(layer.head_dim));
  std::vector<float> out(len, 0.0f), row;
  for (std::size_t j = len - window; j < len; ++j) add_window_row(layer, head, j, scale, row, out);
  return out;
}

// mean_j max_{l,h} q_j^{l,h} . K_i^{l,g(h)} / sqrt(d_k)
std::vector<float> mean_max_raw(const ForwardTrace& trace, const OracleTrace& gen) {
  if (gen.steps() == 0) throw InvalidArgument("empty lookahead");
  if (trace.layers.empty()) throw InvalidArgument("prompt trace has no captured layers");
  for (std::size_t l = 0; l < gen.num_layers; ++l) {
    if (!trace.has(l)) throw InvalidArgument("prompt trace must capture every layer");
  }
  const auto& first = trace.layers.begin()->second;
  const std::size_t len = first.length;
  const float scale = 1.0f / std::sqrt(static_cast<float>(first.head_dim));
  std::vector<double> sum(len, 0.0);
  std::vector<float> best(len);
  for (std::size_t step = 0; step < gen.steps(); ++step) {
    std::fill(best.begin(), best.end(), -std::numeric_limits<float>::infinity());
    for (std::size_t l = 0; l < gen.num_layers; ++l) {
      const auto& layer = trace.at(l);
      for (std::size_t h = 0; h < gen.num_heads; ++h) {
        const auto q = gen.query(step, l, h);
        const std::size_t g = layer.group_of(h);
        for (std::size_t i = 0; i < len; ++i) {
          best[i] = std::max(best[i], dot(q, layer.key(g, i)) * scale);
        }
      }
    }
    for (std::size_t i = 0; i < len; ++i) sum[i] += best[i];
  }
  std::vector<float> out(len);
  for (std::size_t i = 0; i < len; ++i) out[i] = static_cast<float>(sum[i] / static_cast<double>(gen.steps()));
  return out;
}

}  // namespace

ImportanceScores gemfilter_score(const LayerCapture& layer) {
  if (layer.length == 0) throw InvalidArgument("gemfilter_score: empty prompt");
  const std::size_t last = layer.length - 1;
  const float scale = 1.0f / std::sqrt(static_cast<float>(layer.head_dim));
  ImportanceScores s;
  s.values.assign(layer.length, 0.0f);
  for (std::size_t h = 0; h < layer.num_heads; ++h) {
    const auto q = layer.query(h, last);
    const std::size_t g = layer.group_of(h);
    for (std::size_t i = 0; i < layer.length; ++i) s.values[i] += dot(q, layer.key(g, i)) * scale;
  }
  return s;
}

ImportanceScores gemfilter_score(const ForwardTrace& trace, std::size_t layer) {
  auto s = gemfilter_score(trace.at(layer));
  s.layer = layer;
  return s;
}

ImportanceScores window_score(const LayerCapture& layer, std::size_t window) {
  check_window(layer, window);
  const std::size_t len = layer.length;
  const float scale = 1.0f / std::sqrt(static_cast<float>(layer.head_dim));
  ImportanceScores s;
  s.values.assign(len, 0.0f);
  std::vector<float> row;
  for (std::size_t h = 0; h < layer.num_heads; ++h) {
    for (std::size_t j = len - window; j < len; ++j) add_window_row(layer, h, j, scale, row, s.values);
  }
  return s;
}

ImportanceScores window_score(const ForwardTrace& trace, std::size_t layer, std::size_t window) {
  auto s = window_score(trace.at(layer), window);
  s.layer = layer;
  return s;
}

ImportanceScores kv_group_score(const LayerCapture& layer, std::size_t window, std::size_t group) {
  if (group >= layer.num_kv_heads) throw InvalidArgument("kv group index out of range");
  check_window(layer, window);
  const std::size_t hpg = layer.num_heads / layer.num_kv_heads;
  ImportanceScores s;
  s.values.assign(layer.length, 0.0f);
  for (std::size_t h = group * hpg; h < (group + 1) * hpg; ++h) {
    const auto hs = head_window_score(layer, window, h);
    for (std::size_t i = 0; i < hs.size(); ++i) s.values[i] += hs[i];
  }
  for (float& v : s.values) v /= static_cast<float>(hpg);
  return s;
}

ImportanceScores spec_prefill_score(const ForwardTrace& spec_trace, const OracleTrace& lookahead) {
  return ImportanceScores{mean_max_raw(spec_trace, lookahead), std::nullopt};
}

ImportanceScores oracle_score(const ForwardTrace& prompt_trace, const OracleTrace& oracle,
                              std::size_t pool_kernel) {
  if (oracle.steps() == 0) throw OracleUndefined();
  return pool1d(ImportanceScores{mean_max_raw(prompt_trace, oracle), std::nullopt}, pool_kernel);
}

ImportanceScores claa_aggregate(const LayerScoreBuffer& buffer) {
  if (buffer.empty()) throw InvalidArgument("claa_aggregate: empty buffer");
  const auto& entries = buffer.entries();
  ImportanceScores out;
  out.values = entries.front().values;
  for (std::size_t e = 1; e < entries.size(); ++e) {
    if (entries[e].size() != out.size()) throw InvalidArgument("claa_aggregate: length mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = std::max(out.values[i], entries[e].values[i]);
  }
  out.layer = entries.back().layer;
  return out;
}

ImportanceScores pool1d(const ImportanceScores& scores, std::size_t kernel) {
  if (kernel == 0 || kernel % 2 == 0) throw InvalidArgument("pool1d: kernel must be odd");
  const std::size_t len = scores.size();
  const std::size_t half = kernel / 2;
  std::vector<double> prefix(len + 1, 0.0);
  for (std::size_t i = 0; i < len; ++i) prefix[i + 1] = prefix[i] + scores.values[i];
  ImportanceScores out;
  out.layer = scores.layer;
  out.values.resize(len);
  for (std::size_t i = 0; i < len; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(len - 1, i + half);
    out.values[i] = static_cast<float>((prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1));
  }
  return out;
}

std::size_t keep_count(double keep_rate, std::size_t length) {
  if (!(keep_rate > 0.0 && keep_rate <= 1.0)) throw InvalidArgument("keep_rate must be in (0, 1]");
  const auto k = static_cast<std::size_t>(std::floor(keep_rate * static_cast<double>(length) + 0.5));
  return std::max<std::size_t>(1, k);
}

std::vector<std::size_t> topk_indices(const ImportanceScores& scores, std::size_t k,
                                      std::span<const std::size_t> force_include) {
  const std::size_t len = scores.size();
  if (k > len) throw InvalidArgument("topk: k exceeds length");
  std::vector<char> chosen(len, 0);
  std::size_t taken = 0;
  for (auto i : force_include) {
    if (i >= len) throw InvalidArgument("topk: forced index out of range");
    if (!chosen[i]) {
      chosen[i] = 1;
      ++taken;
    }
  }
  if (taken > k) throw InvalidArgument("topk: more forced indices than k");
  std::vector<std::size_t> order(len);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores.values[a] > scores.values[b]; });
  for (std::size_t r = 0; r < len && taken < k; ++r) {
    if (!chosen[order[r]]) {
      chosen[order[r]] = 1;
      ++taken;
    }
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < len; ++i) {
    if (chosen[i]) out.push_back(i);
  }
  return out;
}

void write_scores_csv(std::ostream& out, const ImportanceScores& scores) {
  out << "index,score\n";
  char buf[64];
  for (std::size_t i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g\n", i, static_cast<double>(scores.values[i]));
    out << buf;
  }
}

}  // namespace claa
