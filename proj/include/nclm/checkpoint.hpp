#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "nclm/model.hpp"

namespace nclm {

// Checkpoint container: "NCLM" magic, u32 format version, u8 dtype, a
// canonical JSON meta blob (config, vocab tokens + hashes, rng state, epoch
// counters, best metrics), then named tensor records with little-endian
// payloads. Saving the result of a load reproduces the file byte for byte.

inline constexpr char kCkptMagic[4] = {'N', 'C', 'L', 'M'};
inline constexpr std::uint32_t kCkptVersion = 1;

namespace detail {

template <class V>
void write_pod(std::ostream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::istream& in, const char* what) {
  V v;
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw ParseError(std::string("checkpoint: truncated while reading ") + what);
  return v;
}

inline std::string hash_hex(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

template <class T>
constexpr std::uint8_t dtype_code() {
  return sizeof(T) == 8 ? 0 : 1;
}

}  // namespace detail

template <class T>
struct CheckpointState {
  Model<T> model;
  std::array<std::uint64_t, 4> rng_state{};
  nlohmann::json epochs;
  nlohmann::json best;
};

template <class T>
nlohmann::json checkpoint_meta(Model<T>& model, const std::array<std::uint64_t, 4>& rng_state,
                               const nlohmann::json& epochs, const nlohmann::json& best) {
  nlohmann::json meta;
  meta["config"] = config_to_json(model.cfg);
  meta["vocab"]["nlm_tokens"] = model.vocab.nlm_tokens;
  meta["vocab"]["ntm_tokens"] = model.vocab.ntm_tokens;
  meta["vocab"]["nlm_hash"] = detail::hash_hex(model.vocab.nlm_hash());
  meta["vocab"]["ntm_hash"] = detail::hash_hex(model.vocab.ntm_hash());
  std::vector<std::string> rng;
  for (auto s : rng_state) rng.push_back(detail::hash_hex(s));
  meta["rng"] = rng;
  meta["epochs"] = epochs.is_null() ? nlohmann::json::object() : epochs;
  meta["best"] = best.is_null() ? nlohmann::json::object() : best;
  return meta;
}

template <class T>
void save_checkpoint(const std::string& path, CheckpointState<T>& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open checkpoint for writing: " + path);
  out.write(kCkptMagic, 4);
  detail::write_pod(out, kCkptVersion);
  detail::write_pod(out, detail::dtype_code<T>());

  const std::string meta =
      checkpoint_meta(state.model, state.rng_state, state.epochs, state.best).dump();
  detail::write_pod(out, static_cast<std::uint64_t>(meta.size()));
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

  NamedParams<T> params = state.model.all_params();
  detail::write_pod(out, static_cast<std::uint32_t>(params.size()));
  for (auto& [name, tensor] : params) {
    detail::write_pod(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod(out, static_cast<std::uint32_t>(tensor->shape.size()));
    for (std::size_t d : tensor->shape) detail::write_pod(out, static_cast<std::uint64_t>(d));
    out.write(reinterpret_cast<const char*>(tensor->data.data()),
              static_cast<std::streamsize>(tensor->data.size() * sizeof(T)));
  }
  if (!out) throw ParseError("checkpoint write failed: " + path);
}

namespace detail {

inline std::uint64_t parse_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

template <class T, class Stored>
Tensor<T> read_tensor(std::istream& in, const Shape& shape) {
  const std::size_t n = shape_numel(shape);
  std::vector<Stored> raw(n);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n * sizeof(Stored)));
  if (!in) throw ParseError("checkpoint: truncated tensor payload");
  Tensor<T> t = Tensor<T>::zeros(shape);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<T>(raw[i]);
  return t;
}

}  // namespace detail

template <class T>
CheckpointState<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kCkptMagic, 4) != 0)
    throw ParseError("checkpoint: bad magic, not an NCLM checkpoint: " + path);
  const auto version = detail::read_pod<std::uint32_t>(in, "version");
  if (version != kCkptVersion)
    throw ParseError("checkpoint: unsupported format version " + std::to_string(version));
  const auto dtype = detail::read_pod<std::uint8_t>(in, "dtype");
  if (dtype > 1) throw ParseError("checkpoint: unknown dtype code");

  const auto meta_len = detail::read_pod<std::uint64_t>(in, "meta length");
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw ParseError("checkpoint: truncated meta block");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_str);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint: corrupt meta JSON: ") + e.what());
  }

  CheckpointState<T> state;
  state.model.cfg = validate_config(meta.at("config"));
  auto& vocab = state.model.vocab;
  vocab.nlm_tokens = meta.at("vocab").at("nlm_tokens").get<std::vector<std::string>>();
  vocab.ntm_tokens = meta.at("vocab").at("ntm_tokens").get<std::vector<std::string>>();
  for (std::size_t i = 0; i < vocab.nlm_tokens.size(); ++i) vocab.nlm_index[vocab.nlm_tokens[i]] = i;
  for (std::size_t i = 0; i < vocab.ntm_tokens.size(); ++i) vocab.ntm_index[vocab.ntm_tokens[i]] = i;
  if (detail::parse_hex(meta.at("vocab").at("nlm_hash").get<std::string>()) != vocab.nlm_hash() ||
      detail::parse_hex(meta.at("vocab").at("ntm_hash").get<std::string>()) != vocab.ntm_hash())
    throw ParseError("checkpoint: vocabulary hash mismatch");

  const auto rng = meta.at("rng").get<std::vector<std::string>>();
  if (rng.size() != 4) throw ParseError("checkpoint: bad rng state");
  for (std::size_t i = 0; i < 4; ++i) state.rng_state[i] = detail::parse_hex(rng[i]);
  state.epochs = meta.value("epochs", nlohmann::json::object());
  state.best = meta.value("best", nlohmann::json::object());

  const auto count = detail::read_pod<std::uint32_t>(in, "tensor count");
  std::unordered_map<std::string, Tensor<T>> tensors;
  std::vector<std::string> order;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = detail::read_pod<std::uint32_t>(in, "tensor name length");
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rank = detail::read_pod<std::uint32_t>(in, "tensor rank");
    Shape shape;
    for (std::uint32_t r = 0; r < rank; ++r)
      shape.push_back(static_cast<std::size_t>(detail::read_pod<std::uint64_t>(in, "tensor dim")));
    tensors[name] = dtype == 0 ? detail::read_tensor<T, double>(in, shape)
                               : detail::read_tensor<T, float>(in, shape);
    order.push_back(name);
  }

  auto take = [&](const std::string& name) -> Tensor<T> {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError("checkpoint: missing tensor " + name);
    Tensor<T> t = std::move(it->second);
    tensors.erase(it);
    return t;
  };

  auto& ntm = state.model.ntm;
  ntm.mlp_weight = take("ntm.mlp_weight");
  ntm.mlp_bias = take("ntm.mlp_bias");
  ntm.l1_weight = take("ntm.l1_weight");
  ntm.l1_bias = take("ntm.l1_bias");
  ntm.l2_weight = take("ntm.l2_weight");
  ntm.l2_bias = take("ntm.l2_bias");
  ntm.W = take("ntm.W");
  ntm.b = take("ntm.b");

  auto& nlm = state.model.nlm;
  nlm.embed = take("nlm.embed");
  nlm.U = take("nlm.U");
  nlm.a = take("nlm.a");
  for (std::size_t l = 0; l < state.model.cfg.lstm_layers; ++l) {
    const std::string prefix = "nlm.lstm" + std::to_string(l);
    LstmLayer<T> layer;
    layer.wx = take(prefix + ".wx");
    layer.wh = take(prefix + ".wh");
    layer.b = take(prefix + ".b");
    nlm.layers.push_back(std::move(layer));
  }
  if (tensors.count("nlm.proj_weight")) {
    nlm.proj_weight = take("nlm.proj_weight");
    nlm.proj_bias = take("nlm.proj_bias");
  }
  state.model.topic_emb = take("emb.E");
  if (!tensors.empty())
    throw ParseError("checkpoint: unexpected tensor " + tensors.begin()->first);

  if (ntm.vocab_size() != vocab.ntm_size() || nlm.vocab_size() != vocab.nlm_size())
    throw ParseError("checkpoint: tensor shapes do not match stored vocabularies");
  return state;
}

/// Guards operations that pair a checkpoint with an externally built vocab.
template <class T>
void ensure_vocab_match(const Model<T>& model, const DualVocab& other) {
  if (model.vocab.nlm_hash() != other.nlm_hash() || model.vocab.ntm_hash() != other.ntm_hash())
    throw ConfigError("vocabulary hash mismatch: checkpoint was built from a different corpus");
}

}  // namespace nclm
