// SPDX-License-Identifier: Apache-2.0
#include "claa/model.hpp"

#include <cstring>

#include "rng.hpp"

namespace claa {

std::vector<std::pair<std::string, std::vector<std::size_t>>> Model::tensor_layout(
    const ModelConfig& c) {
  std::vector<std::pair<std::string, std::vector<std::size_t>>> out;
  out.push_back({"embed", {c.vocab_size, c.d_model}});
  for (std::size_t i = 0; i < c.num_layers; ++i) {
    const std::string p = "layer." + std::to_string(i) + ".";
    out.push_back({p + "attn_norm", {c.d_model}});
    out.push_back({p + "wq", {c.d_model, c.q_dim()}});
    out.push_back({p + "wk", {c.d_model, c.kv_dim()}});
    out.push_back({p + "wv", {c.d_model, c.kv_dim()}});
    out.push_back({p + "wo", {c.q_dim(), c.d_model}});
    out.push_back({p + "ffn_norm", {c.d_model}});
    out.push_back({p + "w_gate", {c.d_model, c.ffn_dim()}});
    out.push_back({p + "w_up", {c.d_model, c.ffn_dim()}});
    out.push_back({p + "w_down", {c.ffn_dim(), c.d_model}});
  }
  out.push_back({"final_norm", {c.d_model}});
  out.push_back({"lm_head", {c.d_model, c.vocab_size}});
  return out;
}

namespace {

template <typename ModelT, typename Ptr>
std::vector<std::pair<std::string, Ptr>> collect(ModelT& m) {
  std::vector<std::pair<std::string, Ptr>> out;
  out.push_back({"embed", &m.embed});
  for (std::size_t i = 0; i < m.layers.size(); ++i) {
    auto& l = m.layers[i];
    const std::string p = "layer." + std::to_string(i) + ".";
    out.push_back({p + "attn_norm", &l.attn_norm});
    out.push_back({p + "wq", &l.wq});
    out.push_back({p + "wk", &l.wk});
    out.push_back({p + "wv", &l.wv});
    out.push_back({p + "wo", &l.wo});
    out.push_back({p + "ffn_norm", &l.ffn_norm});
    out.push_back({p + "w_gate", &l.w_gate});
    out.push_back({p + "w_up", &l.w_up});
    out.push_back({p + "w_down", &l.w_down});
  }
  out.push_back({"final_norm", &m.final_norm});
  out.push_back({"lm_head", &m.lm_head});
  return out;
}

bool is_norm(const std::string& name) {
  return name.ends_with("norm");
}

}  // namespace

std::vector<std::pair<std::string, const Tensor*>> Model::named_tensors() const {
  return collect<const Model, const Tensor*>(*this);
}

std::vector<std::pair<std::string, Tensor*>> Model::named_tensors() {
  return collect<Model, Tensor*>(*this);
}

std::uint64_t Model::checksum() const {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ull;
    }
  };
  const std::string cfg = to_json(config).dump();
  mix(cfg.data(), cfg.size());
  for (const auto& [name, t] : named_tensors()) {
    mix(name.data(), name.size());
    mix(t->data.data(), t->data.size() * sizeof(float));
  }
  return h;
}

Model random_init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m;
  m.config = config;
  m.layers.resize(config.num_layers);
  detail::Rng rng(seed);
  const auto layout = Model::tensor_layout(config);
  auto slots = m.named_tensors();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    Tensor& t = *slots[i].second;
    t = Tensor(layout[i].second);
    if (is_norm(layout[i].first)) {
      std::fill(t.data.begin(), t.data.end(), 1.0f);
    } else {
      for (float& v : t.data) v = rng.uniform(-0.05f, 0.05f);
    }
  }
  return m;
}

}  // namespace claa
