// SPDX-License-Identifier: Apache-2.0
#include "claa/model_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <sstream>

#include "claa/error.hpp"

namespace claa {

static_assert(std::endian::native == std::endian::little, "container IO assumes little-endian host");

namespace {

std::string shape_str(const std::vector<std::size_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : bytes_(b) {}
  bool at_end() const { return pos_ == bytes_.size(); }

  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void floats(float* dst, std::size_t n, const std::string& what) {
    need(n * sizeof(float), what);
    std::memcpy(dst, bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

 private:
  void need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) throw FormatError("weights.bin truncated while reading " + what);
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw FormatError("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& p, const void* data, std::size_t n) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) throw Error("write failed: " + p.string());
}

}  // namespace

std::string serialize_config(const ModelConfig& config) {
  return to_json(config).dump(2) + "\n";
}

std::vector<std::uint8_t> serialize_weights(const Model& model) {
  std::vector<std::uint8_t> out;
  for (const auto& [name, t] : model.named_tensors()) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t->shape.size()));
    for (auto d : t->shape) put_u32(out, static_cast<std::uint32_t>(d));
    const auto* p = reinterpret_cast<const std::uint8_t*>(t->data.data());
    out.insert(out.end(), p, p + t->data.size() * sizeof(float));
  }
  return out;
}

Model deserialize_weights(const ModelConfig& config, const std::vector<std::uint8_t>& bytes) {
  config.validate();
  std::map<std::string, Tensor> found;
  Reader r(bytes);
  while (!r.at_end()) {
    const std::uint32_t name_len = r.u32("tensor name length");
    if (name_len == 0 || name_len > 4096) throw FormatError("malformed header: bad tensor name length");
    std::string name = r.str(name_len, "tensor name");
    const std::uint32_t ndim = r.u32(name + " ndim");
    if (ndim == 0 || ndim > 8) throw FormatError(name + ": malformed header: ndim " + std::to_string(ndim));
    std::vector<std::size_t> dims(ndim);
    for (auto& d : dims) d = r.u32(name + " dims");
    Tensor t(dims);
    r.floats(t.data.data(), t.numel(), name + " data");
    if (!found.emplace(name, std::move(t)).second) throw FormatError(name + " duplicated");
  }

  Model m;
  m.config = config;
  m.layers.resize(config.num_layers);
  const auto layout = Model::tensor_layout(config);
  auto slots = m.named_tensors();
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& [name, shape] = layout[i];
    auto it = found.find(name);
    if (it == found.end()) throw FormatError(name + " missing");
    if (it->second.shape != shape) {
      throw FormatError(name + " shape mismatch: expected " + shape_str(shape) + ", got " +
                        shape_str(it->second.shape));
    }
    *slots[i].second = std::move(it->second);
    found.erase(it);
  }
  if (!found.empty()) throw FormatError(found.begin()->first + " unexpected tensor");
  return m;
}

Model load_model(const std::filesystem::path& dir) {
  const auto cfg_path = dir / "config.json";
  if (!std::filesystem::exists(cfg_path)) throw FormatError("missing " + cfg_path.string());
  nlohmann::json j;
  try {
    std::ifstream in(cfg_path);
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed config.json: " + std::string(e.what()));
  }
  ModelConfig config = config_from_json(j);
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("config.json: ") + e.what());
  }
  return deserialize_weights(config, read_file(dir / "weights.bin"));
}

void save_model(const Model& model, const std::filesystem::path& dir, bool force) {
  model.config.validate();
  if (std::filesystem::exists(dir) && !force) {
    throw Error(dir.string() + " already exists (use --force to overwrite)");
  }
  std::filesystem::create_directories(dir);
  const std::string cfg = serialize_config(model.config);
  write_file(dir / "config.json", cfg.data(), cfg.size());
  const auto bytes = serialize_weights(model);
  write_file(dir / "weights.bin", bytes.data(), bytes.size());
}

}  // namespace claa
