// SPDX-License-Identifier: Apache-2.0
#include "kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

namespace claa::detail {

void matmul(const float* x, std::size_t n, const Tensor& w, float* y) {
  const std::size_t in = w.rows();
  const std::size_t out = w.cols();
  const float* wd = w.data.data();
  std::size_t r = 0;
  // Four rows share each weight row load.
  for (; r + 4 <= n; r += 4) {
    float* y0 = y + (r + 0) * out;
    float* y1 = y + (r + 1) * out;
    float* y2 = y + (r + 2) * out;
    float* y3 = y + (r + 3) * out;
    std::fill(y0, y0 + 4 * out, 0.0f);
    const float* x0 = x + (r + 0) * in;
    const float* x1 = x + (r + 1) * in;
    const float* x2 = x + (r + 2) * in;
    const float* x3 = x + (r + 3) * in;
    for (std::size_t i = 0; i < in; ++i) {
      const float a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
      const float* wr = wd + i * out;
      for (std::size_t o = 0; o < out; ++o) {
        const float wv = wr[o];
        y0[o] += a0 * wv;
        y1[o] += a1 * wv;
        y2[o] += a2 * wv;
        y3[o] += a3 * wv;
      }
    }
  }
  for (; r < n; ++r) {
    float* yr = y + r * out;
    std::fill(yr, yr + out, 0.0f);
    const float* xr = x + r * in;
    for (std::size_t i = 0; i < in; ++i) {
      const float a = xr[i];
      const float* wr = wd + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += a * wr[o];
    }
  }
}

void rms_norm(const float* x, std::size_t n, std::size_t d, const float* gain, float* y) {
  for (std::size_t r = 0; r < n; ++r) {
    const float* xr = x + r * d;
    float* yr = y + r * d;
    double ss = 0.0;
    for (std::size_t i = 0; i < d; ++i) ss += static_cast<double>(xr[i]) * xr[i];
    const float inv = static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(d) + 1e-5));
    for (std::size_t i = 0; i < d; ++i) yr[i] = xr[i] * inv * gain[i];
  }
}

void exp_nonpositive(float* v, std::size_t n) {
  // Cephes expf: range reduction by ln2 and a degree-5 polynomial.
  constexpr float kLog2e = 1.44269504088896341f;
  constexpr float kC1 = 0.693359375f;
  constexpr float kC2 = -2.12194440e-4f;
  for (std::size_t i = 0; i < n; ++i) {
    float x = std::max(v[i], -87.3f);
    const float fx = std::floor(x * kLog2e + 0.5f);
    x = x - fx * kC1 - fx * kC2;
    float p = 1.9875691500e-4f;
    p = p * x + 1.3981999507e-3f;
    p = p * x + 8.3334519073e-3f;
    p = p * x + 4.1665795894e-2f;
    p = p * x + 1.6666665459e-1f;
    p = p * x + 5.0000001201e-1f;
    p = p * x * x + x + 1.0f;
    const std::int32_t e = (static_cast<std::int32_t>(fx) + 127) << 23;
    v[i] = p * std::bit_cast<float>(e);
  }
}

namespace {

constexpr std::size_t kLanes = 16;
constexpr std::size_t kBlock = 16;

// acc[0..dk) = sum_j p[j] * v[j][0..dk)
void pv(const float* __restrict p, std::size_t count, const float* __restrict v, std::size_t dk,
        float* __restrict acc) {
  std::fill(acc, acc + dk, 0.0f);
  for (std::size_t j = 0; j < count; ++j) {
    const float pj = p[j];
    const float* vr = v + j * dk;
    for (std::size_t d = 0; d < dk; ++d) acc[d] += pj * vr[d];
  }
}

float max_of(const float* s, std::size_t n) {
  float lanes[kLanes];
  std::fill(lanes, lanes + kLanes, s[0]);
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) lanes[l] = s[j + l] > lanes[l] ? s[j + l] : lanes[l];
  }
  float m = s[0];
  for (std::size_t l = 0; l < kLanes; ++l) m = std::max(m, lanes[l]);
  for (; j < n; ++j) m = std::max(m, s[j]);
  return m;
}

float sum_of(const float* s, std::size_t n) {
  float lanes[kLanes] = {};
  std::size_t j = 0;
  for (; j + kLanes <= n; j += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) lanes[l] += s[j + l];
  }
  float total = 0.0f;
  for (std::size_t l = 0; l < kLanes; ++l) total += lanes[l];
  for (; j < n; ++j) total += s[j];
  return total;
}

}  // namespace

void attention(const LayerActivations& acts, const KvLayer* past, float* out) {
  const auto& qk = acts.qk;
  const std::size_t n = qk.length;
  const std::size_t dk = qk.head_dim;
  const std::size_t heads = qk.num_heads;
  const std::size_t hpg = heads / qk.num_kv_heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(dk));

  std::vector<float> kt;  // [dk][total], keys transposed so scores vectorize over j
  std::vector<float> vals;  // [total][dk]
  std::vector<float> scores;
  std::vector<float> q(dk);
  std::vector<float> acc(dk);

  for (std::size_t g = 0; g < qk.num_kv_heads; ++g) {
    const KvGroup* pg = past ? &past->groups[g] : nullptr;
    const std::size_t np = pg ? pg->size() : 0;
    const std::size_t total = np + n;
    kt.assign(dk * total, 0.0f);
    vals.resize(total * dk);
    for (std::size_t j = 0; j < np; ++j) {
      for (std::size_t d = 0; d < dk; ++d) kt[d * total + j] = pg->keys[j * dk + d];
    }
    if (np) std::memcpy(vals.data(), pg->values.data(), np * dk * sizeof(float));
    for (std::size_t j = 0; j < n; ++j) {
      const auto key = qk.key(g, j);
      for (std::size_t d = 0; d < dk; ++d) kt[d * total + np + j] = key[d];
    }
    std::memcpy(vals.data() + np * dk, acts.values.data() + g * n * dk, n * dk * sizeof(float));
    scores.resize(total);

    for (std::size_t h = g * hpg; h < (g + 1) * hpg; ++h) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t count = np + i + 1;
        const auto qi = qk.query(h, i);
        for (std::size_t d = 0; d < dk; ++d) q[d] = qi[d] * scale;
        float* s = scores.data();
        std::size_t j = 0;
        for (; j + kBlock <= count; j += kBlock) {
          float blk[kBlock] = {};
          for (std::size_t d = 0; d < dk; ++d) {
            const float qd = q[d];
            const float* kr = kt.data() + d * total + j;
            for (std::size_t l = 0; l < kBlock; ++l) blk[l] += qd * kr[l];
          }
          for (std::size_t l = 0; l < kBlock; ++l) s[j + l] = blk[l];
        }
        for (; j < count; ++j) {
          float dot = 0.0f;
          for (std::size_t d = 0; d < dk; ++d) dot += q[d] * kt[d * total + j];
          s[j] = dot;
        }
        const float m = max_of(s, count);
        for (std::size_t t = 0; t < count; ++t) s[t] -= m;
        exp_nonpositive(s, count);
        const float inv = 1.0f / sum_of(s, count);
        pv(s, count, vals.data(), dk, acc.data());
        float* o = out + i * heads * dk + h * dk;
        for (std::size_t d = 0; d < dk; ++d) o[d] = acc[d] * inv;
      }
    }
  }
}

}  // namespace claa::detail
