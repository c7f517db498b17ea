// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "claa/cli.hpp"
#include "claa/model_io.hpp"

using namespace claa;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run claa_lab(std::vector<std::string> args) {
  args.insert(args.begin(), "claa-lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("claa_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// Small enough to keep every command under a second.
const std::vector<std::string> kTiny = {"--layers", "4",   "--d-model", "32", "--heads", "4",
                                        "--kv-heads", "2", "--head-dim", "8", "--vocab", "64"};

std::vector<std::string> with(std::vector<std::string> head, const std::vector<std::string>& tail) {
  head.insert(head.end(), tail.begin(), tail.end());
  return head;
}

void write_prompts(const fs::path& p, std::size_t lines, std::size_t len) {
  std::ofstream out(p);
  for (std::size_t l = 0; l < lines; ++l) {
    for (std::size_t i = 0; i < len; ++i) out << (3 + (i * 7 + l * 13) % 60) << ' ';
    out << "\n\n";
  }
}

}  // namespace

TEST_CASE("gen-model round-trips and refuses to overwrite") {
  const auto dir = scratch("gen");
  const auto model = dir / "m";
  auto r = claa_lab(with({"gen-model", model.string(), "--seed", "5"}, kTiny));
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  const Model back = load_model(model);
  char hex[24];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(back.checksum()));
  CHECK(j.at("checksum") == hex);
  CHECK(back.checksum() == random_init_model(back.config, 5).checksum());

  r = claa_lab(with({"gen-model", model.string()}, kTiny));
  CHECK(r.code == cli::kUsage);
  r = claa_lab(with({"gen-model", model.string(), "--force", "--seed", "6"}, kTiny));
  CHECK(r.code == 0);
  CHECK(load_model(model).checksum() != back.checksum());

  const auto bad = dir / "bad";
  r = claa_lab({"gen-model", bad.string(), "--heads", "3"});
  CHECK(r.code == cli::kUsage);
  CHECK_FALSE(fs::exists(bad));
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit with 1") {
  CHECK(claa_lab({}).code == cli::kUsage);
  CHECK(claa_lab({"frobnicate"}).code == cli::kUsage);
  CHECK(claa_lab({"--help"}).code == 0);

  const auto dir = scratch("usage");
  write_prompts(dir / "p.txt", 1, 40);
  auto r = claa_lab(with({"sweep", "--prompts", (dir / "p.txt").string(), "--methods", "FullKV,H2O"}, kTiny));
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("valid: FullKV, GemFilter") != std::string::npos);

  std::ofstream(dir / "empty.txt") << "\n\n";
  r = claa_lab(with({"rank", "--prompts", (dir / "empty.txt").string()}, kTiny));
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("no prompts") != std::string::npos);

  r = claa_lab(with({"bench", "--prompts", (dir / "p.txt").string(), "--repeats", "2"}, kTiny));
  CHECK(r.code == cli::kUsage);

  r = claa_lab(with({"sweep", "--prompts", (dir / "p.txt").string(), "--pruning-layer", "9"}, kTiny));
  CHECK(r.code == cli::kUsage);
  fs::remove_all(dir);
}

TEST_CASE("missing model is a runtime error") {
  const auto r = claa_lab({"bench", "--model", "/nonexistent/claa", "--random-prompts", "1"});
  CHECK(r.code == cli::kRuntime);
  CHECK_FALSE(r.err.empty());
}

TEST_CASE("rank writes per-method score files") {
  const auto dir = scratch("rank");
  write_prompts(dir / "p.txt", 2, 40);
  const auto r = claa_lab(with({"rank", "--prompts", (dir / "p.txt").string(), "--methods", "Oracle,CLAA",
                                "--keep-rates", "0.5", "--out", (dir / "o").string(), "--window", "4",
                                "--max-gen", "4"},
                               kTiny));
  REQUIRE(r.code == 0);
  const auto base = dir / "o" / "rank";
  CHECK(fs::exists(base / "manifest.json"));
  const auto scores = slurp(base / "Oracle" / "0.5" / "p1_scores.csv");
  CHECK(scores.rfind("index,score\n0,", 0) == 0);
  CHECK(std::count(scores.begin(), scores.end(), '\n') == 41);
  const auto kept = slurp(base / "CLAA" / "0.5" / "p3_kept.csv");
  CHECK(std::count(kept.begin(), kept.end(), '\n') == 21);
  fs::remove_all(dir);
}

TEST_CASE("correlate rows and self-correlation") {
  const auto dir = scratch("corr");
  write_prompts(dir / "p.txt", 1, 48);
  auto args = with({"correlate", "--prompts", (dir / "p.txt").string(), "--out", (dir / "o").string(), "--window",
                    "4", "--max-gen", "4", "--seed", "3"},
                   kTiny);
  REQUIRE(claa_lab(args).code == 0);
  const auto rows = slurp(dir / "o" / "correlate" / "layerwise_seed3.csv");
  std::istringstream in(rows);
  std::string line;
  std::getline(in, line);
  CHECK(line == "prompt,method,layer,rho");
  std::map<std::string, int> per_method;
  while (std::getline(in, line)) {
    const auto method = line.substr(3, line.find(',', 3) - 3);
    ++per_method[method];
    if (method == "Oracle") CHECK(line.substr(line.rfind(',') + 1) == "1");
  }
  CHECK(per_method["Oracle"] == 4);
  for (const auto& [m, n] : per_method) CHECK(n <= 4);
  REQUIRE(claa_lab(args).code == 0);
  CHECK(slurp(dir / "o" / "correlate" / "layerwise_seed3.csv") == rows);
  fs::remove_all(dir);
}

TEST_CASE("sweep grid, layout and rerun determinism") {
  const auto dir = scratch("sweep");
  write_prompts(dir / "p.txt", 2, 40);
  const auto args = with({"sweep", "--prompts", (dir / "p.txt").string(), "--methods", "FullKV,CLAA",
                          "--keep-rates", "0.5,0.25,0.1", "--out", (dir / "o").string(), "--window", "4",
                          "--max-gen", "4", "--seed", "9", "--jobs", "2"},
                         kTiny);
  auto r = claa_lab(args);
  REQUIRE(r.code == 0);
  const auto base = dir / "o" / "sweep";
  auto report = nlohmann::json::parse(slurp(base / "sweep_seed9.json"));
  CHECK(report.at("cells").size() == 12);
  CHECK(report.at("cells")[0].at("method") == "FullKV");
  CHECK(report.at("cells")[0].at("rho_at_lp").is_null());
  CHECK(fs::exists(base / "CLAA" / "0.25" / "CLAA_0.25_seed9.csv"));
  const auto manifest = slurp(base / "manifest.json");
  CHECK(nlohmann::json::parse(manifest).at("config").at("seed") == 9);

  auto strip = [](nlohmann::json j) {
    for (auto& c : j.at("cells")) c.erase("ttft_ms");
    return j.dump();
  };
  r = claa_lab(args);
  REQUIRE(r.code == 0);
  CHECK(strip(nlohmann::json::parse(slurp(base / "sweep_seed9.json"))) == strip(report));
  CHECK(slurp(base / "manifest.json") == manifest);
  fs::remove_all(dir);
}

TEST_CASE("config file is overridden by flags") {
  const auto dir = scratch("cfg");
  write_prompts(dir / "p.txt", 1, 40);
  nlohmann::json cfg = {{"model", {{"num_layers", 4}, {"d_model", 32}, {"num_heads", 4}, {"num_kv_heads", 2},
                                   {"head_dim", 8}, {"vocab_size", 64}}},
                        {"methods", {"FullKV"}},
                        {"keep_rates", {0.5}},
                        {"prompts", (dir / "p.txt").string()},
                        {"out", (dir / "o").string()},
                        {"params", {{"window", 4}, {"max_gen", 4}}},
                        {"seed", 1}};
  std::ofstream(dir / "c.json") << cfg.dump();
  auto r = claa_lab({"sweep", "--config", (dir / "c.json").string(), "--methods", "CLAA", "--seed", "2"});
  REQUIRE(r.code == 0);
  const auto m = nlohmann::json::parse(slurp(dir / "o" / "sweep" / "manifest.json"));
  CHECK(m.at("config").at("methods") == nlohmann::json{"CLAA"});
  CHECK(m.at("config").at("seed") == 2);
  CHECK(m.at("resolved_params").at("window") == 4);
  CHECK(m.at("resolved_params").at("pruning_layer") == 1);

  cfg["bogus"] = 1;
  std::ofstream(dir / "bad.json") << cfg.dump();
  CHECK(claa_lab({"sweep", "--config", (dir / "bad.json").string()}).code == cli::kUsage);
  fs::remove_all(dir);
}

TEST_CASE("niah and bench outputs") {
  const auto dir = scratch("niahbench");
  const auto common = with({"--out", (dir / "o").string(), "--window", "4", "--max-gen", "4", "--methods",
                            "FullKV,CLAA", "--keep-rates", "0.5"},
                           kTiny);
  auto r = claa_lab(with(with({"niah", "--niah-len", "40", "--niah-depths", "0,0.5,1"}, common), {}));
  REQUIRE(r.code == 0);
  const auto acc = slurp(dir / "o" / "niah" / "accuracy_seed0.csv");
  CHECK(acc.rfind("method,keep_rate,accuracy,prompts\nFullKV,0.5,", 0) == 0);

  r = claa_lab(with({"sweep", "--random-prompts", "2", "--prompt-len", "48"}, common));
  REQUIRE(r.code == 0);
  r = claa_lab(with({"bench", "--random-prompts", "1", "--prompt-len", "48", "--repeats", "3", "--decode-steps",
                     "16"},
                    common));
  REQUIRE(r.code == 0);
  const auto base = dir / "o" / "bench";
  CHECK(fs::exists(base / "CLAA" / "0.5" / "bench_r0_seed0.json"));
  CHECK(fs::exists(base / "FullKV" / "1" / "bench_r0_seed0.json"));
  const auto csv = slurp(base / "bench_seed0.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
  const auto scatter = slurp(base / "ttft_vs_score_seed0.csv");
  CHECK(scatter.rfind("method,keep_rate,ttft_ms,mean_score,mean_rho\n", 0) == 0);
  CHECK(std::count(scatter.begin(), scatter.end(), '\n') == 3);
  fs::remove_all(dir);
}

TEST_CASE("prompt file parsing") {
  const auto dir = scratch("prompts");
  std::ofstream(dir / "bad.txt") << "1 2 x3\n";
  CHECK_THROWS_AS(cli::read_prompt_file(dir / "bad.txt"), cli::UsageError);
  std::ofstream(dir / "ok.txt") << "1 2 3\n\n  4\t5 \n";
  const auto p = cli::read_prompt_file(dir / "ok.txt");
  REQUIRE(p.size() == 2);
  CHECK(p[1].id == "p3");
  CHECK(p[1].tokens == std::vector<TokenId>{4, 5});
  CHECK(cli::rate_label(0.1) == "0.1");
  CHECK(cli::rate_label(1.0) == "1");
  fs::remove_all(dir);
}
