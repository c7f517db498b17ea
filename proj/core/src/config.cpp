// SPDX-License-Identifier: Apache-2.0
#include "claa/config.hpp"

#include <set>
#include <string>

#include "claa/error.hpp"

namespace claa {

void ModelConfig::validate() const {
  auto require_positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string(name) + " must be >= 1");
  };
  require_positive(num_layers, "num_layers");
  require_positive(d_model, "d_model");
  require_positive(num_heads, "num_heads");
  require_positive(num_kv_heads, "num_kv_heads");
  require_positive(head_dim, "head_dim");
  require_positive(vocab_size, "vocab_size");
  require_positive(max_position, "max_position");
  if (num_heads % num_kv_heads != 0) {
    throw ConfigError("num_heads (" + std::to_string(num_heads) +
                      ") must be a multiple of num_kv_heads (" + std::to_string(num_kv_heads) + ")");
  }
  if (d_model != num_heads * head_dim) {
    throw ConfigError("d_model must equal num_heads * head_dim");
  }
  if (head_dim % 2 != 0) throw ConfigError("head_dim must be even for rotary pairs");
  if (!(rope_theta > 0.0)) throw ConfigError("rope_theta must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return nlohmann::json{{"num_layers", c.num_layers},     {"d_model", c.d_model},
                        {"num_heads", c.num_heads},       {"num_kv_heads", c.num_kv_heads},
                        {"head_dim", c.head_dim},         {"vocab_size", c.vocab_size},
                        {"rope_theta", c.rope_theta},     {"max_position", c.max_position}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw FormatError("config: expected a JSON object");
  static const std::set<std::string> known = {"num_layers", "d_model",    "num_heads",
                                              "num_kv_heads", "head_dim", "vocab_size",
                                              "rope_theta", "max_position"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw FormatError("config: unknown field '" + key + "'");
  }
  auto count = [&](const char* key) -> std::size_t {
    if (!j.contains(key)) throw FormatError(std::string("config: missing field '") + key + "'");
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) {
      throw FormatError(std::string("config: field '") + key + "' must be a non-negative integer");
    }
    return v.get<std::size_t>();
  };
  ModelConfig c;
  c.num_layers = count("num_layers");
  c.d_model = count("d_model");
  c.num_heads = count("num_heads");
  c.num_kv_heads = count("num_kv_heads");
  c.head_dim = count("head_dim");
  c.vocab_size = count("vocab_size");
  c.max_position = count("max_position");
  if (!j.contains("rope_theta")) throw FormatError("config: missing field 'rope_theta'");
  if (!j.at("rope_theta").is_number()) throw FormatError("config: 'rope_theta' must be a number");
  c.rope_theta = j.at("rope_theta").get<double>();
  return c;
}

}  // namespace claa
