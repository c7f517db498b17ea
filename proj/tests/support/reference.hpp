// SPDX-License-Identifier: Apache-2.0
// Test-side oracles. Deliberately naive: double precision, explicit loops,
// one head at a time, no shared code with the library kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "claa/model.hpp"

namespace claa::test {

using Mat = std::vector<std::vector<double>>;

inline std::vector<double> vec_mat(const std::vector<double>& x, const Tensor& w) {
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t i = 0; i < w.rows(); ++i)
    for (std::size_t o = 0; o < w.cols(); ++o) y[o] += x[i] * w.at(i, o);
  return y;
}

inline std::vector<double> rms(const std::vector<double>& x, const Tensor& gain) {
  double ss = 0.0;
  for (double v : x) ss += v * v;
  const double r = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + 1e-5);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * r * gain.data[i];
  return y;
}

inline void rotate(double* v, std::size_t dk, double pos, double theta) {
  for (std::size_t i = 0; i < dk / 2; ++i) {
    const double a = pos * std::pow(theta, -2.0 * static_cast<double>(i) / static_cast<double>(dk));
    const double x0 = v[2 * i], x1 = v[2 * i + 1];
    v[2 * i] = x0 * std::cos(a) - x1 * std::sin(a);
    v[2 * i + 1] = x0 * std::sin(a) + x1 * std::cos(a);
  }
}

struct RefOutput {
  Mat logits;                  // [n][vocab]
  std::vector<Mat> keys;       // [layer][n][kv_dim], post-rotary
};

/// Textbook pre-norm decoder. Query head h reads KV head h * G / H.
inline RefOutput reference_forward(const Model& m, std::span<const TokenId> tokens,
                                   std::span<const Position> positions) {
  const auto& c = m.config;
  const std::size_t n = tokens.size();
  const std::size_t dk = c.head_dim;
  Mat x(n, std::vector<double>(c.d_model));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < c.d_model; ++d) x[i][d] = m.embed.at(static_cast<std::size_t>(tokens[i]), d);

  RefOutput out;
  for (const auto& w : m.layers) {
    Mat q(n), k(n), v(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto xn = rms(x[i], w.attn_norm);
      q[i] = vec_mat(xn, w.wq);
      k[i] = vec_mat(xn, w.wk);
      v[i] = vec_mat(xn, w.wv);
      for (std::size_t h = 0; h < c.num_heads; ++h) rotate(&q[i][h * dk], dk, positions[i], c.rope_theta);
      for (std::size_t g = 0; g < c.num_kv_heads; ++g) rotate(&k[i][g * dk], dk, positions[i], c.rope_theta);
    }
    out.keys.push_back(k);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> att(c.q_dim(), 0.0);
      for (std::size_t h = 0; h < c.num_heads; ++h) {
        const std::size_t g = h * c.num_kv_heads / c.num_heads;
        std::vector<double> s(i + 1);
        for (std::size_t j = 0; j <= i; ++j) {
          double dot = 0.0;
          for (std::size_t d = 0; d < dk; ++d) dot += q[i][h * dk + d] * k[j][g * dk + d];
          s[j] = dot / std::sqrt(static_cast<double>(dk));
        }
        const double mx = *std::max_element(s.begin(), s.end());
        double z = 0.0;
        for (auto& e : s) z += (e = std::exp(e - mx));
        for (std::size_t j = 0; j <= i; ++j)
          for (std::size_t d = 0; d < dk; ++d) att[h * dk + d] += s[j] / z * v[j][g * dk + d];
      }
      const auto o = vec_mat(att, w.wo);
      for (std::size_t d = 0; d < c.d_model; ++d) x[i][d] += o[d];
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto xn = rms(x[i], w.ffn_norm);
      auto gate = vec_mat(xn, w.w_gate);
      const auto up = vec_mat(xn, w.w_up);
      for (std::size_t f = 0; f < gate.size(); ++f) gate[f] = gate[f] / (1.0 + std::exp(-gate[f])) * up[f];
      const auto down = vec_mat(gate, w.w_down);
      for (std::size_t d = 0; d < c.d_model; ++d) x[i][d] += down[d];
    }
  }
  for (std::size_t i = 0; i < n; ++i) out.logits.push_back(vec_mat(rms(x[i], m.final_norm), m.lm_head));
  return out;
}

inline std::vector<Position> iota_positions(std::size_t n) {
  std::vector<Position> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<Position>(i);
  return p;
}

inline std::vector<TokenId> random_prompt(std::size_t len, std::size_t vocab, std::uint64_t seed,
                                          TokenId lo = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<TokenId> dist(lo, static_cast<TokenId>(vocab) - 1);
  std::vector<TokenId> p(len);
  for (auto& t : p) t = dist(rng);
  return p;
}

inline double max_abs_diff(std::span<const float> a, std::span<const float> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

/// A model whose forward pass is small enough for exhaustive checks.
inline ModelConfig tiny_config(std::size_t layers = 2, std::size_t heads = 4, std::size_t groups = 2) {
  ModelConfig c;
  c.num_layers = layers;
  c.num_heads = heads;
  c.num_kv_heads = groups;
  c.head_dim = 8;
  c.d_model = heads * 8;
  c.vocab_size = 64;
  c.max_position = 1024;
  return c;
}

}  // namespace claa::test
