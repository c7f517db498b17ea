// SPDX-License-Identifier: Apache-2.0
#include "claa/pipelines.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <numeric>

#include "claa/error.hpp"

namespace claa {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

void check_prompt(std::span<const TokenId> prompt) {
  if (prompt.empty()) throw InvalidArgument("empty prompt");
}

// Second pass of the two-pass architecture: a plain forward over the kept
// tokens at their original positions.
PrefillResult forward_kept(const Model& model, std::span<const TokenId> prompt,
                           std::vector<std::size_t> kept) {
  const TokenSequence seq = TokenSequence::from_tokens(prompt).gather(kept);
  ForwardOptions opts;
  opts.all_logits = false;
  ForwardOutput out = full_forward(model, seq, opts);
  PrefillResult r;
  r.next_logits = std::move(out.logits.data);
  r.kv = std::move(out.kv);
  r.kv.next_position = static_cast<Position>(prompt.size());
  r.kept_indices = std::move(kept);
  return r;
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::FullKV: return "FullKV";
    case Method::GemFilter: return "GemFilter";
    case Method::FastKV: return "FastKV";
    case Method::SpecPrefill: return "SpecPrefill";
    case Method::Oracle2Pass: return "Oracle2Pass";
    case Method::OracleEmulated: return "OracleEmulated";
    case Method::CLAA: return "CLAA";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  auto lower = [](std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
  };
  const std::string want = lower(name);
  for (Method m : all_methods()) {
    if (lower(method_name(m)) == want) return m;
  }
  return std::nullopt;
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {Method::FullKV,      Method::GemFilter,
                                              Method::FastKV,      Method::SpecPrefill,
                                              Method::Oracle2Pass, Method::OracleEmulated,
                                              Method::CLAA};
  return methods;
}

bool is_two_pass(Method m) {
  return m == Method::GemFilter || m == Method::SpecPrefill || m == Method::Oracle2Pass;
}

bool is_single_pass(Method m) {
  return m == Method::FastKV || m == Method::CLAA || m == Method::OracleEmulated;
}

std::vector<std::size_t> forced_indices(Method method, const RankingParams& params, std::size_t length) {
  if (!params.force_recent || length == 0 || method == Method::FullKV) return {};
  std::size_t n = is_single_pass(method) ? params.window : 1;
  // A kept set smaller than the window can only hold its most recent part.
  n = std::min({n, length, keep_count(params.keep_rate, length)});
  std::vector<std::size_t> out(n);
  std::iota(out.begin(), out.end(), length - n);
  return out;
}

PrefillResult full_prefill(const Model& model, std::span<const TokenId> prompt) {
  check_prompt(prompt);
  const auto start = Clock::now();
  ForwardOptions opts;
  opts.all_logits = false;
  ForwardOutput out = full_forward(model, TokenSequence::from_tokens(prompt), opts);
  PrefillResult r;
  r.next_logits = std::move(out.logits.data);
  r.kv = std::move(out.kv);
  r.kept_indices = iota_indices(prompt.size());
  r.prefill_ms = elapsed_ms(start);
  return r;
}

PrefillResult gemfilter_prefill(const Model& model, std::span<const TokenId> prompt,
                                const RankingParams& params) {
  check_prompt(prompt);
  params.validate(model.config.num_layers);
  const auto start = Clock::now();
  const std::size_t len = prompt.size();

  // Pass 1: layers 0..r-1 in full, then only the projection at r.
  LayerRunner runner(model, TokenSequence::from_tokens(prompt));
  while (runner.layer() < params.routing_layer) {
    auto acts = runner.project();
    runner.advance(acts, KvLayer{});
  }
  ImportanceScores raw = gemfilter_score(runner.project().qk);
  raw.layer = params.routing_layer;
  ImportanceScores ranking = pool1d(raw, params.pool_kernel);
  const auto forced = forced_indices(Method::GemFilter, params, len);
  auto kept = topk_indices(ranking, keep_count(params.keep_rate, len), forced);

  // Pass 2 starts from scratch on the pruned tokens.
  PrefillResult r = forward_kept(model, prompt, std::move(kept));
  r.per_layer_scores.emplace(params.routing_layer, std::move(raw));
  r.ranking = std::move(ranking);
  r.prefill_ms = elapsed_ms(start);
  return r;
}

namespace {

PrefillResult single_pass(const Model& model, std::span<const TokenId> prompt,
                          const RankingParams& p, Method method, const ImportanceScores* oracle) {
  check_prompt(prompt);
  p.validate(model.config.num_layers);
  const std::size_t len = prompt.size();
  if (method != Method::OracleEmulated && p.window > len) {
    throw InvalidArgument("observation window " + std::to_string(p.window) +
                          " exceeds prompt length " + std::to_string(len));
  }
  if (oracle && oracle->size() != len) throw InvalidArgument("oracle score length != prompt length");
  const auto start = Clock::now();
  const std::size_t k = keep_count(p.keep_rate, len);
  const auto forced = forced_indices(method, p, len);
  const std::size_t lp = p.pruning_layer;

  PrefillResult r;
  std::vector<std::size_t> oracle_keep;
  if (method == Method::OracleEmulated) oracle_keep = topk_indices(*oracle, k, forced);

  LayerRunner runner(model, TokenSequence::from_tokens(prompt));
  LayerScoreBuffer buffer(p.agg_window);
  while (!runner.done()) {
    const std::size_t l = runner.layer();
    LayerActivations acts = runner.project();
    const auto& positions = runner.sequence().positions;
    KvLayer entry;
    if (l > lp) {
      entry = kv_from_activations(acts, positions);
    } else if (method == Method::FastKV) {
      ImportanceScores s = window_score(acts.qk, p.window);
      s.layer = l;
      std::vector<std::vector<std::size_t>> per_group(acts.qk.num_kv_heads);
      for (std::size_t g = 0; g < acts.qk.num_kv_heads; ++g) {
        per_group[g] = topk_indices(pool1d(kv_group_score(acts.qk, p.window, g), p.pool_kernel), k, forced);
      }
      entry = gather_kv(acts, positions, per_group);
      if (l == lp) {
        r.ranking = pool1d(s, p.pool_kernel);
        r.kept_indices = topk_indices(*r.ranking, k, forced);
      }
      r.per_layer_scores.emplace(l, std::move(s));
    } else if (method == Method::CLAA) {
      if (l < p.first_compressed_layer) {
        entry = kv_from_activations(acts, positions);
      } else {
        ImportanceScores s = window_score(acts.qk, p.window);
        s.layer = l;
        entry = gather_kv(acts, positions, topk_indices(pool1d(s, p.pool_kernel), k, forced));
        buffer.push(s);
        r.per_layer_scores.emplace(l, std::move(s));
      }
      if (l == lp) {
        r.ranking = pool1d(claa_aggregate(buffer), p.pool_kernel);
        r.kept_indices = topk_indices(*r.ranking, k, forced);
      }
    } else {
      entry = gather_kv(acts, positions, oracle_keep);
      if (l == lp) {
        r.ranking = *oracle;
        r.kept_indices = oracle_keep;
      }
    }
    runner.advance(acts, std::move(entry));
    if (l == lp) runner.prune(r.kept_indices);
  }
  r.next_logits = runner.last_logits();
  r.kv = runner.take_cache(static_cast<Position>(len));
  r.prefill_ms = elapsed_ms(start);
  return r;
}

}  // namespace

PrefillResult fastkv_prefill(const Model& model, std::span<const TokenId> prompt,
                             const RankingParams& params) {
  return single_pass(model, prompt, params, Method::FastKV, nullptr);
}

PrefillResult claa_prefill(const Model& model, std::span<const TokenId> prompt,
                           const RankingParams& params) {
  return single_pass(model, prompt, params, Method::CLAA, nullptr);
}

PrefillResult oracle_emulation_prefill(const Model& model, std::span<const TokenId> prompt,
                                       const ImportanceScores& scores, const RankingParams& params) {
  return single_pass(model, prompt, params, Method::OracleEmulated, &scores);
}

PrefillResult speculative_prefill(const Model& base, const Model& speculator,
                                  std::span<const TokenId> prompt, const RankingParams& params) {
  check_prompt(prompt);
  params.validate(base.config.num_layers);
  if (base.config.vocab_size != speculator.config.vocab_size) {
    throw InvalidArgument("speculator vocab_size differs from base model");
  }
  const auto start = Clock::now();
  const std::size_t len = prompt.size();

  ForwardOptions opts;
  opts.all_logits = false;
  for (std::size_t l = 0; l < speculator.config.num_layers; ++l) opts.capture.insert(l);
  ForwardOutput spec = full_forward(speculator, TokenSequence::from_tokens(prompt), opts);
  const OracleTrace lookahead =
      greedy_generate(speculator, spec.kv, std::move(spec.logits.data), params.lookahead, std::nullopt);
  ImportanceScores ranking = pool1d(spec_prefill_score(spec.trace, lookahead), params.pool_kernel);
  const auto forced = forced_indices(Method::SpecPrefill, params, len);
  auto kept = topk_indices(ranking, keep_count(params.keep_rate, len), forced);

  PrefillResult r = forward_kept(base, prompt, std::move(kept));
  r.ranking = std::move(ranking);
  r.prefill_ms = elapsed_ms(start);
  return r;
}

ImportanceScores oracle_ranking(const Model& model, std::span<const TokenId> prompt,
                                const RankingParams& params) {
  check_prompt(prompt);
  if (params.max_gen < 1) throw ConfigError("max_gen must be >= 1");
  ForwardOptions opts;
  opts.all_logits = false;
  for (std::size_t l = 0; l < model.config.num_layers; ++l) opts.capture.insert(l);
  ForwardOutput out = full_forward(model, TokenSequence::from_tokens(prompt), opts);
  const OracleTrace gen =
      greedy_generate(model, out.kv, std::move(out.logits.data), params.max_gen, params.eos_id);
  return oracle_score(out.trace, gen, params.pool_kernel);
}

PrefillResult oracle_prefill(const Model& model, std::span<const TokenId> prompt,
                             const ImportanceScores& scores, const RankingParams& params) {
  check_prompt(prompt);
  if (scores.size() != prompt.size()) throw InvalidArgument("oracle score length != prompt length");
  const auto start = Clock::now();
  const auto forced = forced_indices(Method::Oracle2Pass, params, prompt.size());
  auto kept = topk_indices(scores, keep_count(params.keep_rate, prompt.size()), forced);
  PrefillResult r = forward_kept(model, prompt, std::move(kept));
  r.ranking = scores;
  r.prefill_ms = elapsed_ms(start);
  return r;
}

PrefillResult run_prefill(const Model& model, std::span<const TokenId> prompt,
                          const PipelineConfig& cfg, const ImportanceScores* oracle_scores) {
  switch (cfg.method) {
    case Method::FullKV: return full_prefill(model, prompt);
    case Method::GemFilter: return gemfilter_prefill(model, prompt, cfg.params);
    case Method::FastKV: return fastkv_prefill(model, prompt, cfg.params);
    case Method::CLAA: return claa_prefill(model, prompt, cfg.params);
    case Method::SpecPrefill:
      if (!cfg.speculator) throw ConfigError("SpecPrefill requires a speculator model");
      return speculative_prefill(model, *cfg.speculator, prompt, cfg.params);
    case Method::Oracle2Pass:
    case Method::OracleEmulated:
      if (!oracle_scores) throw ConfigError(std::string(method_name(cfg.method)) + " requires oracle scores");
      return cfg.method == Method::Oracle2Pass
                 ? oracle_prefill(model, prompt, *oracle_scores, cfg.params)
                 : oracle_emulation_prefill(model, prompt, *oracle_scores, cfg.params);
  }
  throw ConfigError("unknown method");
}

std::vector<TokenId> decode(const Model& model, const PrefillResult& result, std::size_t steps) {
  if (steps == 0) throw InvalidArgument("decode steps must be >= 1");
  KvCache kv = result.kv;
  std::vector<float> logits = result.next_logits;
  std::vector<TokenId> out;
  out.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const TokenId t = argmax_token(logits);
    out.push_back(t);
    logits = decode_step(model, kv, t);
  }
  return out;
}

std::vector<std::string> check_architecture(Method method, const PrefillResult& result,
                                            const RankingParams& params, std::size_t prompt_len,
                                            std::size_t num_layers) {
  std::vector<std::string> problems;
  auto fail = [&](std::size_t l, const std::string& what) {
    problems.push_back("layer " + std::to_string(l) + ": " + what);
  };
  const auto& kv = result.kv;
  if (kv.layers.size() != num_layers) {
    problems.push_back("cache has " + std::to_string(kv.layers.size()) + " layers");
    return problems;
  }
  try {
    kv.validate();
  } catch (const Error& e) {
    problems.push_back(e.what());
    return problems;
  }
  const std::size_t k = method == Method::FullKV ? prompt_len : keep_count(params.keep_rate, prompt_len);
  if (result.kept_indices.size() != k) problems.push_back("kept_indices size != keep_count");
  for (std::size_t i = 0; i < result.kept_indices.size(); ++i) {
    if (result.kept_indices[i] >= prompt_len || (i && result.kept_indices[i] <= result.kept_indices[i - 1])) {
      problems.push_back("kept_indices not strictly ascending within the prompt");
      break;
    }
  }
  std::vector<Position> kept(result.kept_indices.begin(), result.kept_indices.end());
  std::vector<Position> all(prompt_len);
  std::iota(all.begin(), all.end(), 0);

  auto all_groups_equal = [&](std::size_t l, const std::vector<Position>& want, const char* label) {
    for (const auto& g : kv.layers[l].groups) {
      if (g.positions != want) {
        fail(l, std::string("cached positions differ from ") + label);
        return;
      }
    }
  };
  auto length_is = [&](std::size_t l, std::size_t want) {
    if (kv.layers[l].length() != want) {
      fail(l, "cache length " + std::to_string(kv.layers[l].length()) + " != " + std::to_string(want));
    }
  };
  const std::size_t lp = params.pruning_layer;
  for (std::size_t l = 0; l < num_layers; ++l) {
    switch (method) {
      case Method::FullKV:
        all_groups_equal(l, all, "0..L-1");
        break;
      case Method::GemFilter:
      case Method::SpecPrefill:
      case Method::Oracle2Pass:
        length_is(l, k);
        all_groups_equal(l, kept, "kept_indices");
        break;
      case Method::FastKV:
        length_is(l, k);
        if (l > lp) all_groups_equal(l, kept, "kept_indices");
        break;
      case Method::CLAA:
        if (l < params.first_compressed_layer) {
          all_groups_equal(l, all, "0..L-1 (deferred layer)");
        } else {
          length_is(l, k);
          if (!kv.layers[l].uniform()) fail(l, "CLAA cache not uniform across groups");
          if (l > lp) all_groups_equal(l, kept, "kept_indices");
        }
        break;
      case Method::OracleEmulated:
        length_is(l, k);
        all_groups_equal(l, kept, "kept_indices");
        break;
    }
  }
  return problems;
}

nlohmann::json summarize(const PrefillResult& result, Method method, double keep_rate) {
  nlohmann::json layers = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& layer : result.kv.layers) {
    const std::size_t b = kv_layer_bytes(layer, result.kv.head_dim);
    layers.push_back(b);
    total += b;
  }
  return nlohmann::json{{"method", method_name(method)},
                        {"keep_rate", method == Method::FullKV ? 1.0 : keep_rate},
                        {"kept_indices", result.kept_indices},
                        {"timings", {{"prefill_ms", result.prefill_ms}}},
                        {"cache_bytes_per_layer", layers},
                        {"cache_bytes", total}};
}

}  // namespace claa
