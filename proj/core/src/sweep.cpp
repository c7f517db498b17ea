// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdio>
#include <ostream>
#include <thread>

#include "claa/error.hpp"
#include "claa/eval.hpp"

namespace claa {

nlohmann::json params_to_json(const RankingParams& p) {
  nlohmann::json j{{"window", p.window},
                   {"pool_kernel", p.pool_kernel},
                   {"keep_rate", p.keep_rate},
                   {"agg_window", p.agg_window},
                   {"first_compressed_layer", p.first_compressed_layer},
                   {"pruning_layer", p.pruning_layer},
                   {"routing_layer", p.routing_layer},
                   {"lookahead", p.lookahead},
                   {"max_gen", p.max_gen},
                   {"force_recent", p.force_recent}};
  j["eos_id"] = p.eos_id ? nlohmann::json(*p.eos_id) : nlohmann::json(nullptr);
  return j;
}

bool SweepReport::any_error() const {
  for (const auto& c : cells) {
    if (c.error) return true;
  }
  return false;
}

bool SweepReport::contracts_hold() const {
  for (const auto& c : cells) {
    if (!c.error && !c.contract_violations.empty()) return false;
  }
  return true;
}

nlohmann::json SweepReport::to_json(bool include_timing) const {
  nlohmann::json j;
  j["params"] = params_to_json(params);
  j["methods"] = nlohmann::json::array();
  for (auto m : methods) j["methods"].push_back(method_name(m));
  j["keep_rates"] = keep_rates;
  j["prompts"] = prompt_ids;
  j["pooling"] = "pool_kernel applied to heuristic scores; oracle scores pooled by construction";
  j["cells"] = nlohmann::json::array();
  for (const auto& c : cells) {
    nlohmann::json cell{{"method", method_name(c.method)},
                        {"keep_rate", c.keep_rate},
                        {"effective_keep_rate", c.effective_keep_rate},
                        {"prompt", c.prompt_id},
                        {"kept", c.kept},
                        {"cache_bytes", c.cache_bytes},
                        {"cache_lengths", c.cache_lengths},
                        {"contract_violations", c.contract_violations}};
    cell["score"] = c.score ? nlohmann::json(*c.score) : nlohmann::json(nullptr);
    cell["rho_at_lp"] = c.rho ? nlohmann::json(*c.rho) : nlohmann::json(nullptr);
    cell["error"] = c.error ? nlohmann::json(*c.error) : nlohmann::json(nullptr);
    if (include_timing) cell["ttft_ms"] = c.ttft_ms;
    j["cells"].push_back(std::move(cell));
  }
  return j;
}

void SweepReport::write_csv(std::ostream& out, bool include_timing) const {
  out << "method,keep_rate,effective_keep_rate,prompt,score,rho_at_lp,kept,cache_bytes,contract_ok,error";
  if (include_timing) out << ",ttft_ms";
  out << "\n";
  char buf[64];
  auto num = [&](std::optional<double> v) -> std::string {
    if (!v) return "";
    std::snprintf(buf, sizeof buf, "%.9g", *v);
    return buf;
  };
  for (const auto& c : cells) {
    out << method_name(c.method) << ',' << num(c.keep_rate) << ',' << num(c.effective_keep_rate) << ','
        << c.prompt_id << ',' << num(c.score) << ',' << num(c.rho) << ',' << c.kept << ','
        << c.cache_bytes << ',' << (c.contract_violations.empty() ? 1 : 0) << ','
        << (c.error ? "\"" + *c.error + "\"" : "");
    if (include_timing) out << ',' << num(c.ttft_ms);
    out << "\n";
  }
}

namespace {

struct PromptState {
  std::optional<ImportanceScores> oracle;
  std::optional<std::string> oracle_error;
};

void fill_cell(SweepCell& cell, const Model& model, const SweepPrompt& prompt, const PromptState& state,
               const RankingParams& params, const Model* speculator, const SweepOptions& options) {
  PipelineConfig cfg;
  cfg.method = cell.method;
  cfg.params = params;
  cfg.params.keep_rate = cell.effective_keep_rate;
  cfg.speculator = speculator;
  const bool needs_oracle = cell.method == Method::Oracle2Pass || cell.method == Method::OracleEmulated;
  if (needs_oracle && !state.oracle) {
    cell.error = state.oracle_error.value_or("oracle undefined");
    return;
  }
  try {
    const PrefillResult r = run_prefill(model, prompt.tokens, cfg, state.oracle ? &*state.oracle : nullptr);
    cell.ttft_ms = r.prefill_ms;
    cell.kept = r.kept_indices.size();
    for (const auto& layer : r.kv.layers) {
      cell.cache_bytes += kv_layer_bytes(layer, r.kv.head_dim);
      cell.cache_lengths.push_back(layer.length());
    }
    cell.contract_violations =
        check_architecture(cell.method, r, cfg.params, prompt.tokens.size(), model.config.num_layers);
    if (cell.method != Method::FullKV && r.ranking && state.oracle) {
      try {
        cell.rho = spearman_rho(*r.ranking, *state.oracle);
      } catch (const DegenerateRanking&) {
      }
    }
    if (!prompt.expected.empty()) {
      const auto gen = decode(model, r, prompt.expected.size() + options.extra_decode_steps);
      cell.score = score_exact_match(gen, prompt.expected);
    }
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
}

}  // namespace

SweepReport sweep(const Model& model, const std::vector<SweepPrompt>& prompts,
                  const std::vector<Method>& methods, const std::vector<double>& keep_rates,
                  const RankingParams& params, const Model* speculator, const SweepOptions& options) {
  if (prompts.empty() || methods.empty() || keep_rates.empty()) throw ConfigError("sweep: empty grid");
  for (double r : keep_rates) {
    if (!(r > 0.0 && r <= 1.0)) throw ConfigError("sweep: keep rate out of (0, 1]");
  }
  params.validate(model.config.num_layers);
  for (auto m : methods) {
    if (m == Method::SpecPrefill && !speculator) throw ConfigError("sweep: SpecPrefill needs a speculator");
  }

  SweepReport report;
  report.params = params;
  report.methods = methods;
  report.keep_rates = keep_rates;
  for (const auto& p : prompts) report.prompt_ids.push_back(p.id);

  bool need_oracle = false;
  for (auto m : methods) need_oracle = need_oracle || m != Method::FullKV;
  std::vector<PromptState> states(prompts.size());
  if (need_oracle) {
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      try {
        states[i].oracle = oracle_ranking(model, prompts[i].tokens, params);
      } catch (const std::exception& e) {
        states[i].oracle_error = e.what();
      }
    }
  }

  for (auto m : methods) {
    for (double rate : keep_rates) {
      for (const auto& p : prompts) {
        SweepCell cell;
        cell.method = m;
        cell.keep_rate = rate;
        cell.effective_keep_rate = m == Method::FullKV ? 1.0 : rate;
        cell.prompt_id = p.id;
        report.cells.push_back(std::move(cell));
      }
    }
  }

  const std::size_t n = prompts.size();
  auto work = [&](std::size_t idx) {
    fill_cell(report.cells[idx], model, prompts[idx % n], states[idx % n], params, speculator, options);
  };
  const std::size_t jobs = std::max<std::size_t>(1, options.jobs);
  if (jobs == 1) {
    for (std::size_t i = 0; i < report.cells.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < report.cells.size(); i = next++) work(i);
      });
    }
    for (auto& th : pool) th.join();
  }
  return report;
}

}  // namespace claa
