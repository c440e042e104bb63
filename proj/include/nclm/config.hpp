#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nclm/corpus.hpp"
#include "nclm/nlm.hpp"

namespace nclm {

/// Training/evaluation configuration. JSON config files mirror these field
/// names exactly; unknown keys are rejected.
struct TrainConfig {
  double alpha = 0.1;
  std::size_t topN = 20;
  std::size_t K = 150;
  std::string variant = "lta";
  bool sdt = false;
  double lr = 1e-3;
  std::size_t batch_size = 64;
  std::size_t max_seq_len = 30;
  std::size_t ntm_pretrain_epochs = 20;
  std::size_t nlm_pretrain_epochs = 10;
  std::size_t max_epochs = 100;
  std::size_t early_stop_patience = 5;
  std::uint64_t seed = 42;
  std::string precision = "f64";

  std::size_t ntm_hidden = 256;
  std::size_t lstm_hidden = 600;
  std::size_t lstm_layers = 1;
  std::size_t embed_dim = 300;
  std::size_t topic_embed_dim = 300;
  double dropout = 0.4;
  double grad_clip = 5.0;
  std::string g_activation = "identity";
  std::size_t nlm_min_count = 10;
  std::size_t ntm_min_count = 100;
  double top_frac = 0.001;
  bool strict_topn_divisor = false;
  bool freeze_embeddings = true;
  bool whole_doc_ntm = false;
  bool sdt_once_per_sentence = false;
  std::size_t elbo_samples = 1;

  VariantConfig variant_config() const { return VariantConfig{parse_variant(variant), sdt}; }

  GActivation g() const {
    if (g_activation == "identity") return GActivation::identity;
    if (g_activation == "sigmoid") return GActivation::sigmoid;
    if (g_activation == "tanh") return GActivation::tanh;
    throw ConfigError("unknown g_activation: " + g_activation);
  }

  VocabOptions vocab_options() const {
    VocabOptions v;
    v.nlm_min_count = nlm_min_count;
    v.ntm_min_count = ntm_min_count;
    v.top_frac = top_frac;
    return v;
  }
};

inline nlohmann::json config_to_json(const TrainConfig& c) {
  nlohmann::json j;
  j["alpha"] = c.alpha;
  j["topN"] = c.topN;
  j["K"] = c.K;
  j["variant"] = c.variant;
  j["sdt"] = c.sdt;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["max_seq_len"] = c.max_seq_len;
  j["ntm_pretrain_epochs"] = c.ntm_pretrain_epochs;
  j["nlm_pretrain_epochs"] = c.nlm_pretrain_epochs;
  j["max_epochs"] = c.max_epochs;
  j["early_stop_patience"] = c.early_stop_patience;
  j["seed"] = c.seed;
  j["precision"] = c.precision;
  j["ntm_hidden"] = c.ntm_hidden;
  j["lstm_hidden"] = c.lstm_hidden;
  j["lstm_layers"] = c.lstm_layers;
  j["embed_dim"] = c.embed_dim;
  j["topic_embed_dim"] = c.topic_embed_dim;
  j["dropout"] = c.dropout;
  j["grad_clip"] = c.grad_clip;
  j["g_activation"] = c.g_activation;
  j["nlm_min_count"] = c.nlm_min_count;
  j["ntm_min_count"] = c.ntm_min_count;
  j["top_frac"] = c.top_frac;
  j["strict_topn_divisor"] = c.strict_topn_divisor;
  j["freeze_embeddings"] = c.freeze_embeddings;
  j["whole_doc_ntm"] = c.whole_doc_ntm;
  j["sdt_once_per_sentence"] = c.sdt_once_per_sentence;
  j["elbo_samples"] = c.elbo_samples;
  return j;
}

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(const nlohmann::json& j) : j_(j) {}

  template <class V>
  void get(const char* key, V& out, const char* type_name) {
    seen_.push_back(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const nlohmann::json::exception&) {
      errors_.push_back(std::string(key) + ": expected " + type_name);
    }
  }

  void require(bool ok, const std::string& message) {
    if (!ok) errors_.push_back(message);
  }

  void finish() {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        errors_.push_back(it.key() + ": unknown key");
    if (!errors_.empty()) {
      std::string msg = "invalid config:";
      for (const auto& e : errors_) msg += "\n  " + e;
      throw ConfigError(msg);
    }
  }

 private:
  const nlohmann::json& j_;
  std::vector<std::string> seen_;
  std::vector<std::string> errors_;
};

}  // namespace detail

/// Validates a JSON object against the TrainConfig schema: all fields typed,
/// defaults filled, unknown keys rejected, every offending key reported.
inline TrainConfig validate_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  detail::ConfigReader r(j);
  r.get("alpha", c.alpha, "number");
  r.get("topN", c.topN, "positive integer");
  r.get("K", c.K, "positive integer");
  r.get("variant", c.variant, "string");
  r.get("sdt", c.sdt, "boolean");
  r.get("lr", c.lr, "number");
  r.get("batch_size", c.batch_size, "positive integer");
  r.get("max_seq_len", c.max_seq_len, "positive integer");
  r.get("ntm_pretrain_epochs", c.ntm_pretrain_epochs, "integer");
  r.get("nlm_pretrain_epochs", c.nlm_pretrain_epochs, "integer");
  r.get("max_epochs", c.max_epochs, "integer");
  r.get("early_stop_patience", c.early_stop_patience, "positive integer");
  r.get("seed", c.seed, "integer");
  r.get("precision", c.precision, "string");
  r.get("ntm_hidden", c.ntm_hidden, "positive integer");
  r.get("lstm_hidden", c.lstm_hidden, "positive integer");
  r.get("lstm_layers", c.lstm_layers, "positive integer");
  r.get("embed_dim", c.embed_dim, "positive integer");
  r.get("topic_embed_dim", c.topic_embed_dim, "positive integer");
  r.get("dropout", c.dropout, "number");
  r.get("grad_clip", c.grad_clip, "number");
  r.get("g_activation", c.g_activation, "string");
  r.get("nlm_min_count", c.nlm_min_count, "integer");
  r.get("ntm_min_count", c.ntm_min_count, "integer");
  r.get("top_frac", c.top_frac, "number");
  r.get("strict_topn_divisor", c.strict_topn_divisor, "boolean");
  r.get("freeze_embeddings", c.freeze_embeddings, "boolean");
  r.get("whole_doc_ntm", c.whole_doc_ntm, "boolean");
  r.get("sdt_once_per_sentence", c.sdt_once_per_sentence, "boolean");
  r.get("elbo_samples", c.elbo_samples, "positive integer");

  r.require(c.alpha >= 0.0 && c.alpha <= 1.0, "alpha: must be in [0, 1]");
  r.require(c.topN >= 1, "topN: must be >= 1");
  r.require(c.K >= 1, "K: must be >= 1");
  r.require(c.variant == "lstm" || c.variant == "lta" || c.variant == "eta" ||
                c.variant == "leta",
            "variant: must be one of lstm|lta|eta|leta");
  r.require(!(c.variant == "lstm" && c.sdt), "sdt: variant lstm cannot enable sdt");
  r.require(c.lr > 0.0, "lr: must be positive");
  r.require(c.batch_size >= 1, "batch_size: must be >= 1");
  r.require(c.max_seq_len >= 1, "max_seq_len: must be >= 1");
  r.require(c.early_stop_patience >= 1, "early_stop_patience: must be >= 1");
  r.require(c.precision == "f32" || c.precision == "f64", "precision: must be f32 or f64");
  r.require(c.dropout >= 0.0 && c.dropout < 1.0, "dropout: must be in [0, 1)");
  r.require(c.grad_clip > 0.0, "grad_clip: must be positive");
  r.require(c.g_activation == "identity" || c.g_activation == "sigmoid" ||
                c.g_activation == "tanh",
            "g_activation: must be identity|sigmoid|tanh");
  r.require(c.top_frac >= 0.0 && c.top_frac < 1.0, "top_frac: must be in [0, 1)");
  r.require(c.elbo_samples >= 1, "elbo_samples: must be >= 1");
  r.require(c.lstm_layers >= 1 && c.lstm_layers <= 2, "lstm_layers: must be 1 or 2");
  r.finish();
  return c;
}

inline TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": invalid JSON: " + e.what());
  }
  return validate_config(j);
}

}  // namespace nclm
