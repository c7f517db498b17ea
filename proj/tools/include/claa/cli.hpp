// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "claa/error.hpp"
#include "claa/eval.hpp"

namespace claa::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Raised for bad flags, bad config values and unusable prompt sources.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct NiahSpec {
  std::size_t haystack_len = 512;
  std::vector<double> depths = {0.1, 0.5, 0.9};
  std::size_t per_depth = 1;
  std::size_t payload_len = 4;
};

/// Everything one command needs, resolved from the config file and flags.
struct ExperimentConfig {
  std::optional<std::filesystem::path> model_path;
  ModelConfig model;
  std::optional<std::filesystem::path> speculator_path;
  std::size_t speculator_layers = 2;
  /// Ranking overrides (params_to_json keys) applied on top of
  /// RankingParams::scaled_for(num_layers).
  nlohmann::json params = nlohmann::json::object();
  std::vector<std::string> methods = {"FullKV", "CLAA"};
  std::vector<double> keep_rates = {0.1};
  std::optional<std::filesystem::path> prompt_file;
  std::optional<NiahSpec> niah;
  std::size_t random_prompts = 0;
  std::size_t prompt_len = 256;
  std::filesystem::path out = "out";
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  std::size_t repeats = 3;
  std::size_t decode_steps = 32;
};

/// Round-trips every ExperimentConfig field; written as manifest.json.
nlohmann::json to_json(const ExperimentConfig& cfg);
/// Applies the keys present in `j` on top of `cfg`. Unknown keys are a UsageError.
void apply_json(ExperimentConfig& cfg, const nlohmann::json& j);

RankingParams resolve_params(const ExperimentConfig& cfg, std::size_t num_layers);

/// Whitespace-separated token ids, one prompt per line; blank lines skipped.
std::vector<SweepPrompt> read_prompt_file(const std::filesystem::path& path);
std::vector<SweepPrompt> load_prompts(const ExperimentConfig& cfg);

/// "0.1" -> "0.1", "1" -> "1"; used for directory names.
std::string rate_label(double rate);

/// Entry point shared by the executable and the tests.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace claa::cli
