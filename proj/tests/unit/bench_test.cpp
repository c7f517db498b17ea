// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "claa/bench.hpp"
#include "claa/error.hpp"
#include "reference.hpp"

using namespace claa;

TEST_CASE("median") {
  CHECK(median({3, 1, 2}) == 2);
  CHECK(median({4, 1, 3, 2}) == 2.5);
  CHECK_THROWS_AS(median({}), InvalidArgument);
}

TEST_CASE("cache bytes closed form") {
  CHECK(kv_cache_bytes(KvCache{}) == 0);
  const Model m = random_init_model(test::tiny_config(3, 4, 2), 1);
  const auto r = full_prefill(m, test::random_prompt(20, 64, 1));
  CHECK(kv_cache_bytes(r.kv) == 3 * 2 * 2 * 20 * 8 * 4);
}

TEST_CASE("deferred layers make CLAA hold more than oracle emulation") {
  const Model m = random_init_model(test::tiny_config(6, 4, 2), 2);
  const auto prompt = test::random_prompt(64, 64, 2);
  RankingParams p;
  p.window = 4;
  p.pool_kernel = 3;
  p.first_compressed_layer = 2;
  p.agg_window = 2;
  p.pruning_layer = 3;
  p.routing_layer = 3;
  p.max_gen = 4;
  p.keep_rate = 0.25;
  const auto claa = claa_prefill(m, prompt, p);
  const auto oracle = oracle_emulation_prefill(m, prompt, oracle_ranking(m, prompt, p), p);
  const std::size_t layer_full = 2 * 2 * 64 * 8 * 4;
  const std::size_t layer_kept = 2 * 2 * 16 * 8 * 4;
  CHECK(kv_cache_bytes(claa.kv) == 2 * layer_full + 4 * layer_kept);
  CHECK(kv_cache_bytes(oracle.kv) == 6 * layer_kept);
  CHECK(kv_cache_bytes(claa.kv) > kv_cache_bytes(oracle.kv));
}

TEST_CASE("ttft protocol") {
  const Model m = random_init_model(test::tiny_config(2, 4, 2), 3);
  const auto prompt = test::random_prompt(32, 64, 3);
  PipelineConfig cfg;
  const auto r = measure_ttft(m, prompt, cfg, 3);
  CHECK(r.ttft_samples_ms.size() == 3);
  CHECK(r.repeats == 3);
  CHECK(r.ttft_ms > 0.0);
  CHECK(r.ttft_min_ms <= r.ttft_ms);
  CHECK(r.ttft_ms <= r.ttft_max_ms);
  CHECK(r.keep_rate == 1.0);
  CHECK(r.cache_bytes == 2 * 2 * 2 * 32 * 8 * 4);
  CHECK_THROWS_AS(measure_ttft(m, prompt, cfg, 2), InvalidArgument);

  const auto j = r.to_json();
  CHECK(j.at("ttft_ms").at("median") == r.ttft_ms);
  CHECK(j.at("bytes_per_element") == 4);
  CHECK(r.csv_row().rfind("FullKV,32,1,3,", 0) == 0);
  const std::string header = BenchReport::csv_header(), row = r.csv_row();
  CHECK(std::count(header.begin(), header.end(), ',') == std::count(row.begin(), row.end(), ','));
}

TEST_CASE("decode throughput") {
  const Model m = random_init_model(test::tiny_config(2, 4, 2), 4);
  const auto r = full_prefill(m, test::random_prompt(16, 64, 4));
  CHECK(measure_decode_tps(m, r, 16) > 0.0);
  CHECK_THROWS_AS(measure_decode_tps(m, r, 15), InvalidArgument);
}
