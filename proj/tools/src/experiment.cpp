// SPDX-License-Identifier: Apache-2.0
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "claa/cli.hpp"

namespace claa::cli {

namespace {

template <class T>
T get(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw UsageError("config: bad value for '" + key + "'");
  }
}

void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw UsageError("config: unknown key '" + key + "' in " + where);
  }
}

nlohmann::json path_or_null(const std::optional<std::filesystem::path>& p) {
  return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["model_path"] = path_or_null(c.model_path);
  j["model"] = claa::to_json(c.model);
  j["speculator_path"] = path_or_null(c.speculator_path);
  j["speculator_layers"] = c.speculator_layers;
  j["params"] = c.params;
  j["methods"] = c.methods;
  j["keep_rates"] = c.keep_rates;
  j["prompts"] = path_or_null(c.prompt_file);
  if (c.niah) {
    j["niah"] = {{"haystack_len", c.niah->haystack_len},
                 {"depths", c.niah->depths},
                 {"per_depth", c.niah->per_depth},
                 {"payload_len", c.niah->payload_len}};
  } else {
    j["niah"] = nullptr;
  }
  j["random_prompts"] = c.random_prompts;
  j["prompt_len"] = c.prompt_len;
  j["out"] = c.out.string();
  j["seed"] = c.seed;
  j["jobs"] = c.jobs;
  j["repeats"] = c.repeats;
  j["decode_steps"] = c.decode_steps;
  return j;
}

void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  reject_unknown(j,
                 {"model_path", "model", "speculator_path", "speculator_layers", "params", "methods",
                  "keep_rates", "prompts", "niah", "random_prompts", "prompt_len", "out", "seed", "jobs",
                  "repeats", "decode_steps"},
                 "config file");
  auto opt_path = [&](const char* key, std::optional<std::filesystem::path>& dst) {
    if (!j.contains(key)) return;
    if (j[key].is_null()) {
      dst.reset();
    } else {
      dst = get<std::string>(j[key], key);
    }
  };
  opt_path("model_path", c.model_path);
  opt_path("speculator_path", c.speculator_path);
  opt_path("prompts", c.prompt_file);
  if (j.contains("model")) {
    auto merged = claa::to_json(c.model);
    reject_unknown(j["model"], [&] {
      std::set<std::string> keys;
      for (const auto& [k, _] : merged.items()) keys.insert(k);
      return keys;
    }(), "model");
    merged.update(j["model"]);
    try {
      c.model = config_from_json(merged);
    } catch (const FormatError& e) {
      throw UsageError(e.what());
    }
  }
  if (j.contains("params")) {
    reject_unknown(j["params"],
                   {"window", "pool_kernel", "agg_window", "first_compressed_layer", "pruning_layer",
                    "routing_layer", "lookahead", "max_gen", "eos_id", "force_recent"},
                   "params");
    c.params.update(j["params"]);
  }
  if (j.contains("niah")) {
    if (j["niah"].is_null()) {
      c.niah.reset();
    } else {
      reject_unknown(j["niah"], {"haystack_len", "depths", "per_depth", "payload_len"}, "niah");
      NiahSpec n = c.niah.value_or(NiahSpec{});
      const auto& s = j["niah"];
      if (s.contains("haystack_len")) n.haystack_len = get<std::size_t>(s["haystack_len"], "haystack_len");
      if (s.contains("depths")) n.depths = get<std::vector<double>>(s["depths"], "depths");
      if (s.contains("per_depth")) n.per_depth = get<std::size_t>(s["per_depth"], "per_depth");
      if (s.contains("payload_len")) n.payload_len = get<std::size_t>(s["payload_len"], "payload_len");
      c.niah = n;
    }
  }
  if (j.contains("speculator_layers")) c.speculator_layers = get<std::size_t>(j["speculator_layers"], "speculator_layers");
  if (j.contains("methods")) c.methods = get<std::vector<std::string>>(j["methods"], "methods");
  if (j.contains("keep_rates")) c.keep_rates = get<std::vector<double>>(j["keep_rates"], "keep_rates");
  if (j.contains("random_prompts")) c.random_prompts = get<std::size_t>(j["random_prompts"], "random_prompts");
  if (j.contains("prompt_len")) c.prompt_len = get<std::size_t>(j["prompt_len"], "prompt_len");
  if (j.contains("out")) c.out = get<std::string>(j["out"], "out");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j["seed"], "seed");
  if (j.contains("jobs")) c.jobs = get<std::size_t>(j["jobs"], "jobs");
  if (j.contains("repeats")) c.repeats = get<std::size_t>(j["repeats"], "repeats");
  if (j.contains("decode_steps")) c.decode_steps = get<std::size_t>(j["decode_steps"], "decode_steps");
}

RankingParams resolve_params(const ExperimentConfig& c, std::size_t num_layers) {
  RankingParams p = RankingParams::scaled_for(num_layers);
  const auto& j = c.params;
  auto size = [&](const char* key, std::size_t& dst) {
    if (j.contains(key)) dst = get<std::size_t>(j[key], key);
  };
  size("window", p.window);
  size("pool_kernel", p.pool_kernel);
  size("agg_window", p.agg_window);
  size("first_compressed_layer", p.first_compressed_layer);
  size("pruning_layer", p.pruning_layer);
  size("routing_layer", p.routing_layer);
  size("lookahead", p.lookahead);
  size("max_gen", p.max_gen);
  if (j.contains("eos_id")) {
    if (j["eos_id"].is_null()) {
      p.eos_id.reset();
    } else {
      p.eos_id = get<TokenId>(j["eos_id"], "eos_id");
    }
  }
  if (j.contains("force_recent")) p.force_recent = get<bool>(j["force_recent"], "force_recent");
  p.validate(num_layers);
  return p;
}

std::vector<SweepPrompt> read_prompt_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read prompt file " + path.string());
  std::vector<SweepPrompt> prompts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    SweepPrompt p;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        const long v = std::stol(tok, &used);
        if (used != tok.size() || v < 0 || v > INT32_MAX) throw std::invalid_argument(tok);
        p.tokens.push_back(static_cast<TokenId>(v));
      } catch (const std::logic_error&) {
        throw UsageError(path.string() + ":" + std::to_string(lineno) + ": bad token id '" + tok + "'");
      }
    }
    if (p.tokens.empty()) continue;
    p.id = "p" + std::to_string(lineno);
    prompts.push_back(std::move(p));
  }
  if (prompts.empty()) throw UsageError("no prompts");
  return prompts;
}

std::vector<SweepPrompt> load_prompts(const ExperimentConfig& c) {
  if (c.prompt_file) return read_prompt_file(*c.prompt_file);
  std::vector<SweepPrompt> prompts;
  if (c.niah) {
    if (c.niah->depths.empty() || c.niah->per_depth == 0) throw UsageError("no prompts");
    std::uint64_t k = 0;
    for (double depth : c.niah->depths) {
      for (std::size_t i = 0; i < c.niah->per_depth; ++i, ++k) {
        const auto task =
            gen_niah(c.niah->haystack_len, depth, c.seed * 1000003 + k, c.model.vocab_size, c.niah->payload_len);
        prompts.push_back({"niah_d" + rate_label(depth) + "_" + std::to_string(i), task.prompt, task.answer});
      }
    }
    return prompts;
  }
  if (c.random_prompts > 0) {
    if (c.prompt_len == 0) throw UsageError("prompt_len must be >= 1");
    std::mt19937_64 rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
    const std::uint64_t lo = NiahVocab::kFirstFiller;
    const std::uint64_t span = c.model.vocab_size > lo ? c.model.vocab_size - lo : 1;
    for (std::size_t i = 0; i < c.random_prompts; ++i) {
      SweepPrompt p;
      p.id = "r" + std::to_string(i);
      for (std::size_t t = 0; t < c.prompt_len; ++t) p.tokens.push_back(static_cast<TokenId>(lo + rng() % span));
      prompts.push_back(std::move(p));
    }
    return prompts;
  }
  throw UsageError("no prompt source: pass --prompts, --niah-len or --random-prompts");
}

std::string rate_label(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", rate);
  return buf;
}

}  // namespace claa::cli
