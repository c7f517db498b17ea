// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "claa/error.hpp"
#include "claa/ranking.hpp"

using namespace claa;

namespace {

LayerCapture capture(std::size_t heads, std::size_t groups, std::size_t dk, std::size_t len) {
  LayerCapture c;
  c.num_heads = heads;
  c.num_kv_heads = groups;
  c.head_dim = dk;
  c.length = len;
  c.queries.assign(heads * len * dk, 0.0f);
  c.keys.assign(groups * len * dk, 0.0f);
  return c;
}

float& q_at(LayerCapture& c, std::size_t h, std::size_t i, std::size_t d) {
  return c.queries[(h * c.length + i) * c.head_dim + d];
}
float& k_at(LayerCapture& c, std::size_t g, std::size_t i, std::size_t d) {
  return c.keys[(g * c.length + i) * c.head_dim + d];
}

LayerCapture random_capture(std::size_t heads, std::size_t groups, std::size_t dk, std::size_t len,
                            unsigned seed) {
  auto c = capture(heads, groups, dk, len);
  std::mt19937 rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (auto& v : c.queries) v = n(rng);
  for (auto& v : c.keys) v = n(rng);
  return c;
}

ImportanceScores scores(std::vector<float> v) { return ImportanceScores{std::move(v), std::nullopt}; }

double total(const ImportanceScores& s) {
  double t = 0;
  for (float v : s.values) t += v;
  return t;
}

}  // namespace

TEST_CASE("window score on a hand-built layer") {
  // Query 1 sees keys {0,1} with equal logits; query 2 sees logits [ln 2, 0, 0].
  auto c = capture(1, 1, 2, 3);
  k_at(c, 0, 0, 0) = 1.0f;
  q_at(c, 0, 2, 0) = static_cast<float>(std::sqrt(2.0) * std::log(2.0));
  const auto s = window_score(c, 2);
  CHECK(s[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(s[2] == doctest::Approx(0.25).epsilon(1e-6));
}

TEST_CASE("window score mass equals W times heads") {
  for (unsigned seed = 0; seed < 5; ++seed) {
    const auto one = random_capture(1, 1, 8, 40, seed);
    CHECK(std::abs(total(window_score(one, 8)) - 8.0) <= 1e-5);
    const auto many = random_capture(8, 4, 8, 40, seed);
    CHECK(std::abs(total(window_score(many, 5)) - 40.0) <= 1e-4);
  }
}

TEST_CASE("window size bounds") {
  const auto c = random_capture(2, 1, 4, 6, 1);
  CHECK_THROWS_AS(window_score(c, 7), InvalidArgument);
  CHECK_THROWS_AS(window_score(c, 0), InvalidArgument);
  CHECK_NOTHROW(window_score(c, 6));
}

TEST_CASE("kv group score averages the heads of one group") {
  const auto c = random_capture(4, 2, 4, 20, 3);
  // Group 1 serves heads 2 and 3: rebuild those heads as a 2-head, 1-group layer.
  auto sub = capture(2, 1, 4, 20);
  std::copy(c.queries.begin() + 2 * 20 * 4, c.queries.end(), sub.queries.begin());
  std::copy(c.keys.begin() + 20 * 4, c.keys.end(), sub.keys.begin());
  const auto g = kv_group_score(c, 6, 1);
  const auto w = window_score(sub, 6);
  for (std::size_t i = 0; i < 20; ++i) CHECK(g[i] == doctest::Approx(w[i] / 2).epsilon(1e-5));
  CHECK_THROWS_AS(kv_group_score(c, 6, 2), InvalidArgument);
}

TEST_CASE("gemfilter score is linear in the last query") {
  auto c = random_capture(4, 2, 8, 12, 4);
  const auto base = gemfilter_score(c);
  auto scaled = c;
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t d = 0; d < 8; ++d) q_at(scaled, h, 11, d) *= 3.0f;
  // Earlier queries do not matter.
  for (std::size_t d = 0; d < 8; ++d) q_at(scaled, 0, 3, d) = 100.0f;
  const auto s = gemfilter_score(scaled);
  for (std::size_t i = 0; i < 12; ++i) CHECK(s[i] == doctest::Approx(3.0 * base[i]).epsilon(1e-5));

  auto zero = c;
  for (std::size_t h = 0; h < 4; ++h)
    for (std::size_t d = 0; d < 8; ++d) q_at(zero, h, 11, d) = 0.0f;
  for (float v : gemfilter_score(zero).values) CHECK(v == 0.0f);
}

TEST_CASE("lookahead and oracle scores take mean over steps of max over heads") {
  ForwardTrace trace;
  auto c = capture(2, 1, 2, 2);
  k_at(c, 0, 0, 0) = 1.0f;
  k_at(c, 0, 1, 1) = 1.0f;
  trace.layers.emplace(0, c);
  OracleTrace gen;
  gen.num_layers = 1;
  gen.num_heads = 2;
  gen.head_dim = 2;
  const float r2 = static_cast<float>(std::sqrt(2.0));
  gen.tokens = {5, 6};
  gen.queries = {{r2, 0, 0, 2 * r2}, {-r2, 0, 0, 0}};
  // step 0 raw: head0 [1, 0], head1 [0, 2]; step 1: head0 [-1, 0], head1 [0, 0].
  const auto s = spec_prefill_score(trace, gen);
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(s[1] == doctest::Approx(1.0).epsilon(1e-6));
  const auto o = oracle_score(trace, gen, 3);
  CHECK(o[0] == doctest::Approx(0.75).epsilon(1e-6));
  CHECK(o[1] == doctest::Approx(0.75).epsilon(1e-6));

  OracleTrace empty = gen;
  empty.tokens.clear();
  empty.queries.clear();
  CHECK_THROWS_AS(oracle_score(trace, empty, 3), OracleUndefined);
  CHECK_THROWS_AS(spec_prefill_score(trace, empty), InvalidArgument);
}

TEST_CASE("claa aggregate is the elementwise max of the buffer") {
  LayerScoreBuffer buf(2);
  buf.push(scores({9, 9, 9}));
  buf.push(scores({1, 5, 2}));
  buf.push(scores({3, 0, 4}));
  CHECK(buf.size() == 2);
  CHECK(claa_aggregate(buf).values == std::vector<float>{3, 5, 4});

  std::mt19937 rng(5);
  std::uniform_real_distribution<float> u(-1, 1);
  LayerScoreBuffer big(4);
  for (int l = 0; l < 6; ++l) {
    std::vector<float> v(50);
    for (auto& x : v) x = u(rng);
    big.push(scores(v));
  }
  const auto agg = claa_aggregate(big);
  for (const auto& e : big.entries())
    for (std::size_t i = 0; i < 50; ++i) CHECK(agg[i] >= e[i]);
}

TEST_CASE("pool1d uses partial windows at the edges") {
  CHECK(pool1d(scores({0, 0, 3, 0, 0}), 3).values == std::vector<float>{0, 1, 1, 1, 0});
  CHECK(pool1d(scores({3, 0, 0}), 3).values == std::vector<float>{1.5f, 1, 0});
  CHECK(pool1d(scores({2, 4}), 7).values == std::vector<float>{3, 3});
  CHECK(pool1d(scores({1, 2, 3}), 1).values == std::vector<float>{1, 2, 3});
  CHECK_THROWS_AS(pool1d(scores({1, 2}), 4), InvalidArgument);
}

TEST_CASE("pool1d preserves constants and commutes with shifts away from edges") {
  const auto flat = pool1d(scores(std::vector<float>(31, 0.25f)), 7);
  CHECK(flat.size() == 31);
  for (float v : flat.values) CHECK(v == doctest::Approx(0.25));

  std::vector<float> a(40, 0.0f), b(40, 0.0f);
  std::mt19937 rng(2);
  std::uniform_real_distribution<float> u(0, 1);
  for (std::size_t i = 10; i < 20; ++i) a[i] = b[i + 5] = u(rng);
  const auto pa = pool1d(scores(a), 5);
  const auto pb = pool1d(scores(b), 5);
  for (std::size_t i = 5; i < 30; ++i) CHECK(pa[i] == doctest::Approx(pb[i + 5]).epsilon(1e-6));
}

TEST_CASE("keep count rounds half up with a floor of one") {
  CHECK(keep_count(0.1, 256) == 26);
  CHECK(keep_count(0.5, 5) == 3);
  CHECK(keep_count(0.1, 15) == 2);
  CHECK(keep_count(0.01, 10) == 1);
  CHECK(keep_count(1.0, 4096) == 4096);
  CHECK_THROWS_AS(keep_count(0.0, 10), InvalidArgument);
  CHECK_THROWS_AS(keep_count(1.5, 10), InvalidArgument);
}

TEST_CASE("topk examples") {
  CHECK(topk_indices(scores({0.1f, 0.9f, 0.5f}), 2) == std::vector<std::size_t>{1, 2});
  CHECK(topk_indices(scores({0.5f, 0.5f, 0.1f}), 1) == std::vector<std::size_t>{0});
  const std::vector<std::size_t> force = {2};
  CHECK(topk_indices(scores({0.9f, 0.1f, 0.2f}), 2, force) == std::vector<std::size_t>{0, 2});
  CHECK_THROWS_AS(topk_indices(scores({1, 2}), 3), InvalidArgument);
}

TEST_CASE("topk is ascending, distinct, exact size and scale invariant") {
  std::mt19937 rng(8);
  std::uniform_real_distribution<float> u(-3, 3);
  std::uniform_int_distribution<int> coarse(0, 4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<float> v(64);
    for (auto& x : v) x = trial % 2 ? u(rng) : static_cast<float>(coarse(rng));
    const std::size_t k = 1 + static_cast<std::size_t>(trial);
    const std::vector<std::size_t> force = {63};
    const auto idx = topk_indices(scores(v), k, force);
    REQUIRE(idx.size() == k);
    for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i - 1] < idx[i]);
    CHECK(idx.back() == 63);
    auto scaled = v;
    for (auto& x : scaled) x *= 4.0f;
    CHECK(topk_indices(scores(scaled), k, force) == idx);
  }
}

TEST_CASE("ranking params") {
  CHECK_THROWS_AS(RankingParams{}.validate(8), ConfigError);
  CHECK_NOTHROW(RankingParams{}.validate(32));
  const auto p32 = RankingParams::scaled_for(32);
  CHECK(p32.pruning_layer == RankingParams{}.pruning_layer);
  CHECK(p32.first_compressed_layer == RankingParams{}.first_compressed_layer);
  const auto p16 = RankingParams::scaled_for(16);
  CHECK(p16.pruning_layer == 7);
  CHECK(p16.first_compressed_layer == 2);
  CHECK_NOTHROW(p16.validate(16));
  auto bad = p16;
  bad.pool_kernel = 4;
  CHECK_THROWS_AS(bad.validate(16), ConfigError);
}

TEST_CASE("scores serialize as index,score csv") {
  std::ostringstream out;
  write_scores_csv(out, scores({0.5f, 2.0f}));
  CHECK(out.str() == "index,score\n0,0.5\n1,2\n");
}
