// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "claa/bench.hpp"
#include "claa/cli.hpp"
#include "claa/model_io.hpp"

namespace claa::cli {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPoolingNote =
    "pool_kernel applied to heuristic scores; oracle scores pooled by construction";

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string valid_names() {
  std::string s;
  for (Method m : all_methods()) {
    if (!s.empty()) s += ", ";
    s += method_name(m);
  }
  return s;
}

std::vector<Method> parse_methods(const std::vector<std::string>& names) {
  if (names.empty()) throw UsageError("method list is empty");
  std::vector<Method> out;
  for (const auto& n : names) {
    auto m = parse_method(n);
    if (!m) throw UsageError("unknown method '" + n + "'; valid: " + valid_names());
    out.push_back(*m);
  }
  return out;
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

struct Context {
  ExperimentConfig cfg;
  Model model;
  std::unique_ptr<Model> speculator;
  RankingParams params;
  std::vector<SweepPrompt> prompts;
  fs::path dir;
};

Context prepare(ExperimentConfig cfg, const std::string& command, bool need_speculator) {
  if (cfg.keep_rates.empty()) throw UsageError("keep-rate list is empty");
  for (double r : cfg.keep_rates) {
    if (!(r > 0.0 && r <= 1.0)) throw UsageError("keep rate " + rate_label(r) + " outside (0, 1]");
  }
  Context ctx;
  if (cfg.model_path) {
    ctx.model = load_model(*cfg.model_path);
    cfg.model = ctx.model.config;
  } else {
    cfg.model.validate();
    ctx.model = random_init_model(cfg.model, cfg.seed);
  }
  if (need_speculator) {
    if (cfg.speculator_path) {
      ctx.speculator = std::make_unique<Model>(load_model(*cfg.speculator_path));
    } else {
      ModelConfig sc = cfg.model;
      sc.num_layers = cfg.speculator_layers;
      sc.validate();
      ctx.speculator = std::make_unique<Model>(random_init_model(sc, cfg.seed + 1));
    }
  }
  ctx.params = resolve_params(cfg, cfg.model.num_layers);
  ctx.prompts = load_prompts(cfg);
  ctx.dir = cfg.out / command;
  ctx.cfg = std::move(cfg);
  return ctx;
}

void write_manifest(const Context& ctx, const std::string& command) {
  nlohmann::json m;
  m["command"] = command;
  m["config"] = to_json(ctx.cfg);
  m["resolved_params"] = params_to_json(ctx.params);
  m["model_checksum"] = hex(ctx.model.checksum());
  if (ctx.speculator) m["speculator_checksum"] = hex(ctx.speculator->checksum());
  m["prompts"] = nlohmann::json::array();
  for (const auto& p : ctx.prompts) m["prompts"].push_back({{"id", p.id}, {"length", p.tokens.size()}});
  m["pooling"] = kPoolingNote;
  write_text(ctx.dir / "manifest.json", m.dump(2) + "\n");
}

std::string seed_tag(const Context& ctx) { return "seed" + std::to_string(ctx.cfg.seed); }

int cmd_gen_model(const ExperimentConfig& cfg, const fs::path& path, bool force, std::ostream& out) {
  cfg.model.validate();
  if (fs::exists(path) && !force) throw UsageError(path.string() + " exists; pass --force to overwrite");
  const Model m = random_init_model(cfg.model, cfg.seed);
  save_model(m, path, force);
  out << nlohmann::json{{"path", path.string()}, {"checksum", hex(m.checksum())}}.dump() << "\n";
  return kOk;
}

int cmd_rank(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  // "Oracle" names the raw answer-informed ranking; everything else is a pipeline.
  std::vector<std::optional<Method>> methods;
  bool need_spec = false;
  for (const auto& n : cfg.methods) {
    if (parse_method(n) == Method::FullKV) continue;  // nothing to rank
    if (n == "Oracle" || n == "oracle") {
      methods.push_back(std::nullopt);
      continue;
    }
    auto m = parse_method(n);
    if (!m) throw UsageError("unknown method '" + n + "'; valid: Oracle, " + valid_names());
    need_spec = need_spec || *m == Method::SpecPrefill;
    methods.push_back(m);
  }
  if (methods.empty()) throw UsageError("no rankable method in the list (FullKV has no ranking)");
  Context ctx = prepare(cfg, "rank", need_spec);

  std::size_t files = 0;
  nlohmann::json skipped = nlohmann::json::array();
  for (const auto& prompt : ctx.prompts) {
    std::optional<ImportanceScores> oracle;
    bool oracle_failed = false;
    for (const auto& m : methods) {
      const bool wants_oracle = !m || *m == Method::Oracle2Pass || *m == Method::OracleEmulated;
      if (wants_oracle && !oracle && !oracle_failed) {
        try {
          oracle = oracle_ranking(ctx.model, prompt.tokens, ctx.params);
        } catch (const OracleUndefined& e) {
          oracle_failed = true;
          err << "prompt " << prompt.id << ": " << e.what() << "; skipped\n";
          skipped.push_back(prompt.id);
        }
      }
      if (wants_oracle && oracle_failed) continue;
      const std::string name = m ? std::string(method_name(*m)) : "Oracle";
      for (double rate : ctx.cfg.keep_rates) {
        RankingParams p = ctx.params;
        p.keep_rate = rate;
        ImportanceScores scores;
        std::vector<std::size_t> kept;
        if (!m) {
          scores = *oracle;
          kept = topk_indices(scores, keep_count(rate, prompt.tokens.size()),
                              forced_indices(Method::Oracle2Pass, p, prompt.tokens.size()));
        } else {
          const PrefillResult r = run_prefill(ctx.model, prompt.tokens, {*m, p, ctx.speculator.get()},
                                              oracle ? &*oracle : nullptr);
          scores = *r.ranking;
          kept = r.kept_indices;
        }
        const fs::path base = ctx.dir / name / rate_label(rate);
        std::ostringstream sc, kp;
        write_scores_csv(sc, scores);
        kp << "index\n";
        for (auto i : kept) kp << i << "\n";
        write_text(base / (prompt.id + "_scores.csv"), sc.str());
        write_text(base / (prompt.id + "_kept.csv"), kp.str());
        files += 2;
      }
    }
  }
  write_manifest(ctx, "rank");
  out << nlohmann::json{{"files", files}, {"skipped", skipped}}.dump() << "\n";
  return kOk;
}

int cmd_correlate(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  Context ctx = prepare(cfg, "correlate", false);
  std::ostringstream rows;
  rows << "prompt,method,layer,rho\n";
  std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> acc;
  std::vector<std::string> order;
  std::size_t done = 0;
  for (const auto& prompt : ctx.prompts) {
    std::vector<RankCorrelationReport> reports;
    try {
      reports = layerwise_correlation(ctx.model, prompt.tokens, ctx.params, prompt.id);
    } catch (const OracleUndefined& e) {
      err << "prompt " << prompt.id << ": " << e.what() << "; skipped\n";
      continue;
    }
    ++done;
    for (const auto& r : reports) {
      if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
      for (const auto& [layer, rho] : r.rho) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.9g", rho);
        rows << prompt.id << ',' << r.method << ',' << layer << ',' << buf << "\n";
        auto& a = acc[{r.method, layer}];
        a.first += rho;
        a.second += 1;
      }
    }
  }
  if (done == 0) throw Error("oracle undefined for every prompt");
  std::ostringstream summary;
  summary << "method,layer,mean_rho,prompts\n";
  for (const auto& method : order) {
    for (std::size_t l = 0; l < ctx.model.config.num_layers; ++l) {
      auto it = acc.find({method, l});
      if (it == acc.end()) continue;
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.9g", it->second.first / static_cast<double>(it->second.second));
      summary << method << ',' << l << ',' << buf << ',' << it->second.second << "\n";
    }
  }
  write_text(ctx.dir / ("layerwise_" + seed_tag(ctx) + ".csv"), rows.str());
  write_text(ctx.dir / ("summary_" + seed_tag(ctx) + ".csv"), summary.str());
  write_manifest(ctx, "correlate");
  out << summary.str();
  return kOk;
}

int write_sweep(const Context& ctx, const SweepReport& report, std::ostream& out, std::ostream& err) {
  const std::string tag = seed_tag(ctx);
  write_text(ctx.dir / ("sweep_" + tag + ".json"), report.to_json().dump(2) + "\n");
  std::ostringstream all;
  report.write_csv(all);
  write_text(ctx.dir / ("sweep_" + tag + ".csv"), all.str());
  for (Method m : report.methods) {
    for (double rate : report.keep_rates) {
      SweepReport part = report;
      part.cells.clear();
      for (const auto& c : report.cells) {
        if (c.method == m && c.keep_rate == rate) part.cells.push_back(c);
      }
      std::ostringstream csv;
      part.write_csv(csv);
      const std::string name = std::string(method_name(m)) + "_" + rate_label(rate) + "_" + tag + ".csv";
      write_text(ctx.dir / method_name(m) / rate_label(rate) / name, csv.str());
    }
  }
  int code = kOk;
  for (const auto& c : report.cells) {
    const std::string where = std::string(method_name(c.method)) + " @ " + rate_label(c.keep_rate) + " / " + c.prompt_id;
    if (c.error) {
      err << where << ": " << *c.error << "\n";
      code = kRuntime;
    }
    for (const auto& v : c.contract_violations) {
      err << where << ": contract violation: " << v << "\n";
      code = kRuntime;
    }
  }
  out << nlohmann::json{{"cells", report.cells.size()},
                        {"errors", report.any_error()},
                        {"contracts_hold", report.contracts_hold()}}
             .dump()
      << "\n";
  return code;
}

int cmd_sweep(const ExperimentConfig& cfg, const std::string& command, std::ostream& out, std::ostream& err) {
  const auto methods = parse_methods(cfg.methods);
  const bool need_spec = std::find(methods.begin(), methods.end(), Method::SpecPrefill) != methods.end();
  Context ctx = prepare(cfg, command, need_spec);
  SweepOptions opts;
  opts.jobs = ctx.cfg.jobs;
  const SweepReport report =
      sweep(ctx.model, ctx.prompts, methods, ctx.cfg.keep_rates, ctx.params, ctx.speculator.get(), opts);
  write_manifest(ctx, command);
  if (command == "niah") {
    // Retrieval accuracy per (method, keep rate), averaged over prompts.
    std::ostringstream acc;
    acc << "method,keep_rate,accuracy,prompts\n";
    for (Method m : report.methods) {
      for (double rate : report.keep_rates) {
        double hits = 0;
        std::size_t n = 0;
        for (const auto& c : report.cells) {
          if (c.method == m && c.keep_rate == rate && c.score) {
            hits += *c.score;
            ++n;
          }
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6g", n ? hits / static_cast<double>(n) : 0.0);
        acc << method_name(m) << ',' << rate_label(rate) << ',' << buf << ',' << n << "\n";
      }
    }
    write_text(ctx.dir / ("accuracy_" + seed_tag(ctx) + ".csv"), acc.str());
  }
  return write_sweep(ctx, report, out, err);
}

// Mean score / rho per (method, keep rate) from a previous sweep, keyed like bench rows.
std::map<std::pair<std::string, std::string>, std::pair<nlohmann::json, nlohmann::json>> sweep_means(
    const fs::path& path) {
  std::map<std::pair<std::string, std::string>, std::pair<nlohmann::json, nlohmann::json>> out;
  std::ifstream in(path);
  const auto j = nlohmann::json::parse(in);
  std::map<std::pair<std::string, std::string>, std::array<double, 4>> acc;
  for (const auto& c : j.at("cells")) {
    const std::string method = c.at("method");
    const double rate = method == "FullKV" ? 1.0 : c.at("keep_rate").get<double>();
    auto& a = acc[{method, rate_label(rate)}];
    if (!c.at("score").is_null()) {
      a[0] += c.at("score").get<double>();
      a[1] += 1;
    }
    if (!c.at("rho_at_lp").is_null()) {
      a[2] += c.at("rho_at_lp").get<double>();
      a[3] += 1;
    }
  }
  for (const auto& [key, a] : acc) {
    out[key] = {a[1] > 0 ? nlohmann::json(a[0] / a[1]) : nlohmann::json(nullptr),
                a[3] > 0 ? nlohmann::json(a[2] / a[3]) : nlohmann::json(nullptr)};
  }
  return out;
}

int cmd_bench(const ExperimentConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.repeats < 3) throw UsageError("--repeats must be >= 3");
  if (cfg.decode_steps > 0 && cfg.decode_steps < 16) throw UsageError("--decode-steps must be 0 or >= 16");
  const auto methods = parse_methods(cfg.methods);
  const bool need_spec = std::find(methods.begin(), methods.end(), Method::SpecPrefill) != methods.end();
  Context ctx = prepare(cfg, "bench", need_spec);
  const std::string tag = seed_tag(ctx);

  std::vector<BenchReport> rows;
  std::vector<std::string> row_prompts;
  for (const auto& prompt : ctx.prompts) {
    // Oracle scores are a property of the prompt; computing them is not part of the timed prefill.
    std::optional<ImportanceScores> oracle;
    for (Method m : methods) {
      if (m != Method::Oracle2Pass && m != Method::OracleEmulated) continue;
      try {
        oracle = oracle_ranking(ctx.model, prompt.tokens, ctx.params);
      } catch (const OracleUndefined& e) {
        err << "prompt " << prompt.id << ": " << e.what() << "; oracle methods skipped\n";
      }
      break;
    }
    for (Method m : methods) {
      if ((m == Method::Oracle2Pass || m == Method::OracleEmulated) && !oracle) continue;
      const std::vector<double> rates = m == Method::FullKV ? std::vector<double>{1.0} : ctx.cfg.keep_rates;
      for (double rate : rates) {
        PipelineConfig pc{m, ctx.params, ctx.speculator.get()};
        pc.params.keep_rate = rate;
        BenchReport r = measure_ttft(ctx.model, prompt.tokens, pc, ctx.cfg.repeats, oracle ? &*oracle : nullptr);
        if (ctx.cfg.decode_steps > 0) {
          const PrefillResult pre = run_prefill(ctx.model, prompt.tokens, pc, oracle ? &*oracle : nullptr);
          r.decode_tps = measure_decode_tps(ctx.model, pre, ctx.cfg.decode_steps);
        }
        auto j = r.to_json();
        j["prompt"] = prompt.id;
        j["seed"] = ctx.cfg.seed;
        write_text(ctx.dir / r.method / rate_label(r.keep_rate) / ("bench_" + prompt.id + "_" + tag + ".json"),
                   j.dump(2) + "\n");
        rows.push_back(std::move(r));
        row_prompts.push_back(prompt.id);
      }
    }
  }

  std::ostringstream csv;
  csv << "prompt," << BenchReport::csv_header() << "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) csv << row_prompts[i] << ',' << rows[i].csv_row() << "\n";
  write_text(ctx.dir / ("bench_" + tag + ".csv"), csv.str());

  const fs::path sweep_json = ctx.cfg.out / "sweep" / ("sweep_" + tag + ".json");
  if (fs::exists(sweep_json)) {
    const auto means = sweep_means(sweep_json);
    std::ostringstream sc;
    sc << "method,keep_rate,ttft_ms,mean_score,mean_rho\n";
    for (const auto& r : rows) {
      auto it = means.find({r.method, rate_label(r.keep_rate)});
      if (it == means.end()) continue;
      auto cell = [](const nlohmann::json& v) { return v.is_null() ? std::string() : v.dump(); };
      sc << r.method << ',' << rate_label(r.keep_rate) << ',' << r.ttft_ms << ',' << cell(it->second.first) << ','
         << cell(it->second.second) << "\n";
    }
    write_text(ctx.dir / ("ttft_vs_score_" + tag + ".csv"), sc.str());
  }
  write_manifest(ctx, "bench");
  out << csv.str();
  return kOk;
}

// Binds a flag whose value, when given, overrides the config file.
class Overrides {
 public:
  template <class T, class Fn>
  void add(CLI::App* app, const std::string& name, const std::string& help, Fn apply) {
    auto value = std::make_shared<T>();
    CLI::Option* opt = app->add_option(name, *value, help);
    entries_.push_back({opt, [value, apply](ExperimentConfig& c) { apply(c, *value); }});
  }
  void flag(CLI::App* app, const std::string& name, const std::string& help,
            std::function<void(ExperimentConfig&)> apply) {
    entries_.push_back({app->add_flag(name, help), std::move(apply)});
  }
  void apply(ExperimentConfig& cfg) const {
    for (const auto& [opt, fn] : entries_) {
      if (opt->count() > 0) fn(cfg);
    }
  }

 private:
  std::vector<std::pair<CLI::Option*, std::function<void(ExperimentConfig&)>>> entries_;
};

void add_model_flags(CLI::App* app, Overrides& ov) {
  auto field = [&](const std::string& flag, std::size_t ModelConfig::*member, const std::string& help) {
    ov.add<std::size_t>(app, flag, help, [member](ExperimentConfig& c, std::size_t v) { c.model.*member = v; });
  };
  field("--layers", &ModelConfig::num_layers, "Decoder layers");
  field("--d-model", &ModelConfig::d_model, "Hidden width");
  field("--heads", &ModelConfig::num_heads, "Query heads");
  field("--kv-heads", &ModelConfig::num_kv_heads, "Key/value head groups");
  field("--head-dim", &ModelConfig::head_dim, "Per-head dimension");
  field("--vocab", &ModelConfig::vocab_size, "Vocabulary size");
  field("--max-position", &ModelConfig::max_position, "Largest position id + 1");
  ov.add<double>(app, "--rope-theta", "Rotary base", [](ExperimentConfig& c, double v) { c.model.rope_theta = v; });
}

void add_experiment_flags(CLI::App* app, Overrides& ov) {
  add_model_flags(app, ov);
  ov.add<std::string>(app, "--model", "Model container directory (default: random init from --seed)",
                      [](ExperimentConfig& c, const std::string& v) { c.model_path = v; });
  ov.add<std::string>(app, "--spec-model", "Speculator container directory",
                      [](ExperimentConfig& c, const std::string& v) { c.speculator_path = v; });
  ov.add<std::size_t>(app, "--spec-layers", "Layers of the random speculator",
                      [](ExperimentConfig& c, std::size_t v) { c.speculator_layers = v; });
  for (const char* key : {"window", "pool_kernel", "agg_window", "first_compressed_layer", "pruning_layer",
                          "routing_layer", "lookahead", "max_gen"}) {
    std::string flag = std::string("--") + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    ov.add<std::size_t>(app, flag, std::string("Ranking parameter ") + key,
                        [k = std::string(key)](ExperimentConfig& c, std::size_t v) { c.params[k] = v; });
  }
  ov.add<TokenId>(app, "--eos", "Stop token for oracle generation",
                  [](ExperimentConfig& c, TokenId v) { c.params["eos_id"] = v; });
  ov.flag(app, "--no-force-recent", "Do not force recent tokens into kept sets",
          [](ExperimentConfig& c) { c.params["force_recent"] = false; });
  ov.add<std::vector<std::string>>(app, "--methods", "Comma-separated method names",
                                   [](ExperimentConfig& c, const std::vector<std::string>& v) { c.methods = v; });
  app->get_option("--methods")->delimiter(',');
  ov.add<std::vector<double>>(app, "--keep-rates", "Comma-separated keep rates",
                              [](ExperimentConfig& c, const std::vector<double>& v) { c.keep_rates = v; });
  app->get_option("--keep-rates")->delimiter(',');
  ov.add<std::string>(app, "--prompts", "File of token-id lines",
                      [](ExperimentConfig& c, const std::string& v) { c.prompt_file = v; });
  ov.add<std::size_t>(app, "--niah-len", "Haystack length for generated retrieval prompts",
                      [](ExperimentConfig& c, std::size_t v) {
                        if (!c.niah) c.niah = NiahSpec{};
                        c.niah->haystack_len = v;
                      });
  ov.add<std::vector<double>>(app, "--niah-depths", "Needle depths in [0, 1]",
                              [](ExperimentConfig& c, const std::vector<double>& v) {
                                if (!c.niah) c.niah = NiahSpec{};
                                c.niah->depths = v;
                              });
  app->get_option("--niah-depths")->delimiter(',');
  ov.add<std::size_t>(app, "--niah-count", "Prompts per depth", [](ExperimentConfig& c, std::size_t v) {
    if (!c.niah) c.niah = NiahSpec{};
    c.niah->per_depth = v;
  });
  ov.add<std::size_t>(app, "--random-prompts", "Number of random prompts",
                      [](ExperimentConfig& c, std::size_t v) { c.random_prompts = v; });
  ov.add<std::size_t>(app, "--prompt-len", "Length of random prompts",
                      [](ExperimentConfig& c, std::size_t v) { c.prompt_len = v; });
  ov.add<std::string>(app, "--out", "Output root", [](ExperimentConfig& c, const std::string& v) { c.out = v; });
  ov.add<std::size_t>(app, "--jobs", "Worker threads for sweeps", [](ExperimentConfig& c, std::size_t v) { c.jobs = v; });
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Token-ranking experiments on small decoder-only transformers", "claa-lab"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::uint64_t seed = 0;
  app.add_option("--config", config_path, "JSON experiment config; flags override it");
  CLI::Option* seed_opt = app.add_option("--seed", seed, "Global seed");

  Overrides ov;
  CLI::App* gen = app.add_subcommand("gen-model", "Write a random-init model container");
  add_model_flags(gen, ov);
  std::string gen_path;
  bool force = false;
  gen->add_option("path", gen_path, "Output directory")->required();
  gen->add_flag("--force", force, "Overwrite an existing directory");

  std::map<std::string, CLI::App*> subs;
  for (auto [name, help] : {std::pair{"rank", "Per-token importance scores and kept sets"},
                            std::pair{"correlate", "Layer-wise rank correlation against the oracle"},
                            std::pair{"sweep", "Method x keep-rate x prompt grid"},
                            std::pair{"niah", "Needle-in-a-haystack retrieval sweep"},
                            std::pair{"bench", "Prefill latency, decode throughput, cache size"}}) {
    CLI::App* sub = app.add_subcommand(name, help);
    add_experiment_flags(sub, ov);
    subs[name] = sub;
  }
  ov.add<std::size_t>(subs["bench"], "--repeats", "Timed runs after one warm-up (>= 3)",
                      [](ExperimentConfig& c, std::size_t v) { c.repeats = v; });
  ov.add<std::size_t>(subs["bench"], "--decode-steps", "Decode steps for throughput (0 disables)",
                      [](ExperimentConfig& c, std::size_t v) { c.decode_steps = v; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) {
      std::ifstream in(config_path);
      if (!in) throw UsageError("cannot read config " + config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw UsageError("config " + config_path + ": " + e.what());
      }
      apply_json(cfg, j);
    }
    ov.apply(cfg);
    if (seed_opt->count() > 0) cfg.seed = seed;

    if (gen->parsed()) return cmd_gen_model(cfg, gen_path, force, out);
    if (subs["rank"]->parsed()) return cmd_rank(cfg, out, err);
    if (subs["correlate"]->parsed()) return cmd_correlate(cfg, out, err);
    if (subs["sweep"]->parsed()) return cmd_sweep(cfg, "sweep", out, err);
    if (subs["niah"]->parsed()) {
      if (!cfg.niah && !cfg.prompt_file) cfg.niah = NiahSpec{};
      return cmd_sweep(cfg, "niah", out, err);
    }
    if (subs["bench"]->parsed()) return cmd_bench(cfg, out, err);
    return kUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
}

}  // namespace claa::cli
