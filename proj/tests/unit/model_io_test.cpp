// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "claa/error.hpp"
#include "claa/model_io.hpp"
#include "reference.hpp"

using namespace claa;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("claa_io_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<std::uint8_t> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

}  // namespace

TEST_CASE("save then load round-trips bit-exactly") {
  const Model m = random_init_model(test::tiny_config(2, 4, 2), 17);
  const auto dir = scratch("rt");
  save_model(m, dir);
  const Model back = load_model(dir);
  CHECK(back.config == m.config);
  CHECK(back.checksum() == m.checksum());
  CHECK(serialize_weights(back) == slurp(dir / "weights.bin"));
  fs::remove_all(dir);
}

TEST_CASE("save refuses an existing directory unless forced") {
  const Model m = random_init_model(test::tiny_config(1, 2, 1), 1);
  const auto dir = scratch("force");
  save_model(m, dir);
  CHECK_THROWS_AS(save_model(m, dir), Error);
  CHECK_NOTHROW(save_model(m, dir, true));
  fs::remove_all(dir);
}

TEST_CASE("weights layout starts with the embedding record") {
  const Model m = random_init_model(test::tiny_config(1, 2, 1), 2);
  const auto bytes = serialize_weights(m);
  std::vector<std::uint8_t> head;
  put_u32(head, 5);
  for (char ch : std::string("embed")) head.push_back(static_cast<std::uint8_t>(ch));
  put_u32(head, 2);
  put_u32(head, 64);
  put_u32(head, 16);
  REQUIRE(bytes.size() > head.size() + 4);
  CHECK(std::equal(head.begin(), head.end(), bytes.begin()));
  float first;
  std::memcpy(&first, bytes.data() + head.size(), 4);
  CHECK(first == m.embed.data[0]);
}

TEST_CASE("load errors name the offending tensor") {
  const Model m = random_init_model(test::tiny_config(1, 2, 1), 3);
  auto bytes = serialize_weights(m);

  SUBCASE("missing tensor") {
    // Drop the trailing lm_head record: header is 4+7 name bytes, 4 ndim, 8 dims.
    const std::size_t rec = 4 + 7 + 4 + 8 + 16 * 64 * 4;
    bytes.resize(bytes.size() - rec);
    try {
      deserialize_weights(m.config, bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()) == "lm_head missing");
    }
  }
  SUBCASE("shape mismatch") {
    ModelConfig other = m.config;
    other.vocab_size = 65;
    try {
      deserialize_weights(other, bytes);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()) == "embed shape mismatch: expected [65, 16], got [64, 16]");
    }
  }
  SUBCASE("truncation") {
    bytes.resize(bytes.size() - 3);
    CHECK_THROWS_AS(deserialize_weights(m.config, bytes), FormatError);
  }
}

TEST_CASE("config file carries exactly the config fields") {
  const auto text = serialize_config(test::tiny_config());
  const auto j = nlohmann::json::parse(text);
  CHECK(j.size() == 8);
  CHECK(j.at("head_dim") == 8);
  CHECK(text.back() == '\n');
}

TEST_CASE("load rejects a container with an invalid config") {
  const auto dir = scratch("badcfg");
  fs::create_directories(dir);
  auto j = to_json(test::tiny_config());
  j["num_kv_heads"] = 3;
  std::ofstream(dir / "config.json") << j.dump();
  std::ofstream(dir / "weights.bin") << "";
  CHECK_THROWS_AS(load_model(dir), FormatError);
  fs::remove_all(dir);
}
