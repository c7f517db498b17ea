// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>

#include "claa/forward.hpp"
#include "claa/kv_cache.hpp"
#include "claa/tensor.hpp"

namespace claa::detail {

/// y[n][out] = x[n][in] * w[in][out]; y is overwritten.
void matmul(const float* x, std::size_t n, const Tensor& w, float* y);

/// Row-wise RMS normalization with epsilon 1e-5 and per-channel gain.
void rms_norm(const float* x, std::size_t n, std::size_t d, const float* gain, float* y);

/// exp for arguments <= 0, accurate to a few ulp; flushes below -87.3 to ~1e-38.
void exp_nonpositive(float* v, std::size_t n);

/// Causal grouped-query attention of the current block against `past` plus
/// itself. Writes [n][H*d_k] into `out`.
void attention(const LayerActivations& acts, const KvLayer* past, float* out);

}  // namespace claa::detail
