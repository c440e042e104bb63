#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nclm/corpus.hpp"
#include "nclm/embeddings.hpp"
#include "nclm/ntm.hpp"
#include "nclm/tape.hpp"
#include "nclm/topics.hpp"

namespace nclm {

enum class Variant { lstm, lta, eta, leta };

inline Variant parse_variant(const std::string& s) {
  if (s == "lstm") return Variant::lstm;
  if (s == "lta") return Variant::lta;
  if (s == "eta") return Variant::eta;
  if (s == "leta") return Variant::leta;
  throw ConfigError("unknown variant: " + s + " (expected lstm|lta|eta|leta)");
}

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::lstm: return "lstm";
    case Variant::lta: return "lta";
    case Variant::eta: return "eta";
    default: return "leta";
  }
}

struct VariantConfig {
  Variant kind = Variant::lta;
  bool sdt = false;

  bool composes() const { return kind != Variant::lstm; }
  bool uses_ltr() const { return kind == Variant::lta || kind == Variant::leta; }
  bool uses_etr() const { return kind == Variant::eta || kind == Variant::leta; }

  std::size_t context_dim(std::size_t k, std::size_t embed_dim) const {
    std::size_t d = 0;
    if (uses_ltr()) d += k;
    if (uses_etr()) d += embed_dim;
    return sdt ? 2 * d : d;
  }

  void validate() const {
    if (kind == Variant::lstm && sdt) throw ConfigError("variant lstm cannot enable sdt");
  }

  std::string name() const { return variant_name(kind) + (sdt ? "+sdt" : ""); }
};

/// One LSTM layer: stacked gate weights in i,f,g,o order.
template <class T>
struct LstmLayer {
  Tensor<T> wx;  // [4H x in]
  Tensor<T> wh;  // [4H x H]
  Tensor<T> b;   // [4H]
};

template <class T>
struct NlmParams {
  Tensor<T> embed;  // [Din x V], trainable input embeddings
  std::vector<LstmLayer<T>> layers;
  Tensor<T> proj_weight;  // [(H + ctx) x H]; empty for the plain lstm variant
  Tensor<T> proj_bias;    // [H]
  Tensor<T> U;            // [H x V]
  Tensor<T> a;            // [V]

  std::size_t vocab_size() const { return embed.cols(); }
  std::size_t input_dim() const { return embed.rows(); }
  std::size_t hidden_size() const { return U.rows(); }
  std::size_t context_dim() const {
    return proj_weight.size() == 0 ? 0 : proj_weight.rows() - hidden_size();
  }

  static NlmParams init(std::size_t vocab, std::size_t input_dim, std::size_t hidden,
                        std::size_t n_layers, std::size_t ctx_dim, Rng& rng,
                        const DualVocab* vocab_table = nullptr,
                        const EmbeddingFile* pretrained = nullptr) {
    const T lim = T(0.05);
    NlmParams p;
    p.embed = uniform_sample<T>(rng, {input_dim, vocab}, -lim, lim);
    if (vocab_table && pretrained && pretrained->dim == input_dim) {
      for (std::size_t j = 0; j < vocab; ++j) {
        auto it = pretrained->vectors.find(vocab_table->nlm_tokens[j]);
        if (it == pretrained->vectors.end()) continue;
        for (std::size_t i = 0; i < input_dim; ++i) p.embed.at(i, j) = static_cast<T>(it->second[i]);
      }
    }
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < n_layers; ++l) {
      LstmLayer<T> layer;
      layer.wx = uniform_sample<T>(rng, {4 * hidden, in}, -lim, lim);
      layer.wh = uniform_sample<T>(rng, {4 * hidden, hidden}, -lim, lim);
      layer.b = Tensor<T>::zeros({4 * hidden});
      p.layers.push_back(std::move(layer));
      in = hidden;
    }
    if (ctx_dim > 0) {
      p.proj_weight = uniform_sample<T>(rng, {hidden + ctx_dim, hidden}, -lim, lim);
      p.proj_bias = Tensor<T>::zeros({hidden});
    }
    p.U = uniform_sample<T>(rng, {hidden, vocab}, -lim, lim);
    p.a = Tensor<T>::zeros({vocab});
    return p;
  }

  NamedParams<T> named_params() {
    NamedParams<T> out{{"nlm.embed", &embed}, {"nlm.U", &U}, {"nlm.a", &a}};
    for (std::size_t l = 0; l < layers.size(); ++l) {
      const std::string prefix = "nlm.lstm" + std::to_string(l);
      out.emplace_back(prefix + ".wx", &layers[l].wx);
      out.emplace_back(prefix + ".wh", &layers[l].wh);
      out.emplace_back(prefix + ".b", &layers[l].b);
    }
    if (proj_weight.size() > 0) {
      out.emplace_back("nlm.proj_weight", &proj_weight);
      out.emplace_back("nlm.proj_bias", &proj_bias);
    }
    return out;
  }
};

template <class T>
struct NlmVars {
  using Index = typename Tape<T>::Index;
  static constexpr Index npos = static_cast<Index>(-1);
  Index embed = npos;
  struct Layer {
    Index wx, wh, b;
  };
  std::vector<Layer> layers;
  Index proj_weight = npos, proj_bias = npos;
  Index U = npos, a = npos;
};

template <class T>
NlmVars<T> stage_nlm(Tape<T>& tape, NlmParams<T>& p, bool trainable = true) {
  NlmVars<T> v;
  v.embed = tape.leaf(p.embed, trainable);
  for (auto& layer : p.layers)
    v.layers.push_back({tape.leaf(layer.wx, trainable), tape.leaf(layer.wh, trainable),
                        tape.leaf(layer.b, trainable)});
  if (p.proj_weight.size() > 0) {
    v.proj_weight = tape.leaf(p.proj_weight, trainable);
    v.proj_bias = tape.leaf(p.proj_bias, trainable);
  }
  v.U = tape.leaf(p.U, trainable);
  v.a = tape.leaf(p.a, trainable);
  return v;
}

/// Leaf indices in the order of NlmParams::named_params().
template <class T>
std::vector<std::pair<std::string, typename Tape<T>::Index>> named_nodes(const NlmVars<T>& v) {
  std::vector<std::pair<std::string, typename Tape<T>::Index>> out{
      {"nlm.embed", v.embed}, {"nlm.U", v.U}, {"nlm.a", v.a}};
  for (std::size_t l = 0; l < v.layers.size(); ++l) {
    const std::string prefix = "nlm.lstm" + std::to_string(l);
    out.emplace_back(prefix + ".wx", v.layers[l].wx);
    out.emplace_back(prefix + ".wh", v.layers[l].wh);
    out.emplace_back(prefix + ".b", v.layers[l].b);
  }
  if (v.proj_weight != NlmVars<T>::npos) {
    out.emplace_back("nlm.proj_weight", v.proj_weight);
    out.emplace_back("nlm.proj_bias", v.proj_bias);
  }
  return out;
}

template <class T>
struct LstmState {
  using Index = typename Tape<T>::Index;
  std::vector<Index> h, c;
};

template <class T>
LstmState<T> zero_state(Tape<T>& tape, std::size_t hidden, std::size_t n_layers) {
  LstmState<T> s;
  for (std::size_t l = 0; l < n_layers; ++l) {
    s.h.push_back(tape.constant(Tensor<T>::zeros({hidden})));
    s.c.push_back(tape.constant(Tensor<T>::zeros({hidden})));
  }
  return s;
}

/// Inverted-dropout mask constant, or npos when inactive.
template <class T>
typename Tape<T>::Index dropout_mask(Tape<T>& tape, std::size_t n, T p, RunMode mode, Rng* rng) {
  if (mode != RunMode::train || p <= T(0)) return NlmVars<T>::npos;
  if (!rng) throw ConfigError("dropout requires an rng in train mode");
  Tensor<T> mask = Tensor<T>::zeros({n});
  const T keep = T(1) - p;
  for (auto& v : mask.data) v = rng->uniform() < keep ? T(1) / keep : T(0);
  return tape.constant(std::move(mask));
}

/// One LSTM time step through all layers. Dropout (train mode) applies
/// between layers and on the top output, not on recurrent state.
template <class T>
struct StepOut {
  typename Tape<T>::Index output;
  LstmState<T> state;
};

template <class T>
StepOut<T> lstm_step_nodes(Tape<T>& tape, const NlmVars<T>& nlm, const LstmState<T>& prev,
                           typename Tape<T>::Index x, T dropout_p = T(0),
                           RunMode mode = RunMode::eval, Rng* rng = nullptr) {
  using Index = typename Tape<T>::Index;
  LstmState<T> next;
  Index input = x;
  const std::size_t n_layers = nlm.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& layer = nlm.layers[l];
    const std::size_t hidden = tape.value(prev.h[l]).size();
    auto z = tape.add(tape.add(tape.matmul(layer.wx, input), tape.matmul(layer.wh, prev.h[l])),
                      layer.b);
    auto i_gate = tape.sigmoid(tape.slice(z, 0, hidden));
    auto f_gate = tape.sigmoid(tape.slice(z, hidden, 2 * hidden));
    auto g_gate = tape.tanh_op(tape.slice(z, 2 * hidden, 3 * hidden));
    auto o_gate = tape.sigmoid(tape.slice(z, 3 * hidden, 4 * hidden));
    auto c_new = tape.add(tape.mul(f_gate, prev.c[l]), tape.mul(i_gate, g_gate));
    auto h_new = tape.mul(o_gate, tape.tanh_op(c_new));
    next.c.push_back(c_new);
    next.h.push_back(h_new);
    input = h_new;
    auto mask = dropout_mask(tape, hidden, dropout_p, mode, rng);
    if (mask != NlmVars<T>::npos) input = tape.mul(input, mask);
  }
  return StepOut<T>{input, std::move(next)};
}

/// Composition (Eq-style): o-hat = sigmoid([o; c]^T Wp + bp).
template <class T>
typename Tape<T>::Index compose_node(Tape<T>& tape, const NlmVars<T>& nlm,
                                     typename Tape<T>::Index o, typename Tape<T>::Index c) {
  if (nlm.proj_weight == NlmVars<T>::npos)
    throw ConfigError("compose: projection parameters missing for this variant");
  auto cat = tape.concat({o, c});
  if (tape.value(cat).size() != tape.value(nlm.proj_weight).rows())
    throw DimensionError("compose: [o; c] length does not match projection rows");
  return tape.sigmoid(tape.add(tape.matvec_t(nlm.proj_weight, cat), nlm.proj_bias));
}

/// Topic context nodes for one scope (document or sentence).
template <class T>
struct ContextNodes {
  typename Tape<T>::Index ltr = NlmVars<T>::npos;
  typename Tape<T>::Index etr = NlmVars<T>::npos;
};

/// Assembles c per variant; SDT order is [h_d-s; h_s-y; z_d-s; z_s-y].
template <class T>
typename Tape<T>::Index build_context_node(Tape<T>& tape, const VariantConfig& variant,
                                           const ContextNodes<T>& doc,
                                           const ContextNodes<T>* sent = nullptr) {
  if (!variant.composes()) throw ConfigError("build_context: lstm variant has no topic context");
  if (variant.sdt && !sent) throw ConfigError("build_context: sdt requires a sentence bundle");
  std::vector<typename Tape<T>::Index> parts;
  if (variant.uses_ltr()) {
    parts.push_back(doc.ltr);
    if (variant.sdt) parts.push_back(sent->ltr);
  }
  if (variant.uses_etr()) {
    parts.push_back(doc.etr);
    if (variant.sdt) parts.push_back(sent->etr);
  }
  for (auto p : parts)
    if (p == NlmVars<T>::npos) throw ConfigError("build_context: missing context component");
  return parts.size() == 1 ? parts[0] : tape.concat(parts);
}

/// log p(.|o-hat) over the NLM vocabulary.
template <class T>
typename Tape<T>::Index predict_log_probs_node(Tape<T>& tape, const NlmVars<T>& nlm,
                                               typename Tape<T>::Index o_hat) {
  return tape.log_softmax(tape.add(tape.matvec_t(nlm.U, o_hat), nlm.a));
}

/// Negative log-likelihood of one sequence chunk under the configured
/// variant. sentence_ctx(m) supplies the per-position s-y context when SDT is
/// on; it is never called otherwise.
template <class T>
typename Tape<T>::Index nlm_loss_node(
    Tape<T>& tape, const NlmVars<T>& nlm, const VariantConfig& variant,
    const SequenceBatch& batch, const ContextNodes<T>& doc_ctx,
    const std::function<ContextNodes<T>(std::size_t)>& sentence_ctx = nullptr,
    T dropout_p = T(0), RunMode mode = RunMode::eval, Rng* rng = nullptr) {
  if (batch.length() == 0) throw ConfigError("nlm_loss: empty sequence");
  variant.validate();
  if (variant.sdt && !sentence_ctx) throw ConfigError("nlm_loss: sdt requires sentence contexts");

  const std::size_t hidden = tape.value(nlm.U).rows();
  LstmState<T> state = zero_state(tape, hidden, nlm.layers.size());
  typename Tape<T>::Index doc_context = NlmVars<T>::npos;
  if (variant.composes() && !variant.sdt)
    doc_context = build_context_node(tape, variant, doc_ctx);

  typename Tape<T>::Index loss = tape.constant(Tensor<T>::scalar(T(0)));
  for (std::size_t m = 0; m < batch.length(); ++m) {
    auto x = tape.column(nlm.embed, batch.inputs[m]);
    auto step = lstm_step_nodes(tape, nlm, state, x, dropout_p, mode, rng);
    state = step.state;
    auto o_hat = step.output;
    if (variant.composes()) {
      typename Tape<T>::Index ctx = doc_context;
      if (variant.sdt) {
        ContextNodes<T> sent = sentence_ctx(m);
        ctx = build_context_node(tape, variant, doc_ctx, &sent);
      }
      o_hat = compose_node(tape, nlm, step.output, ctx);
    }
    auto lp = predict_log_probs_node(tape, nlm, o_hat);
    loss = tape.sub(loss, tape.pick(lp, batch.targets[m]));
  }
  return loss;
}

/// Final top-layer output state after running the whole id stream, eval mode.
/// State carries across the full stream regardless of training-time chunking.
template <class T>
Tensor<T> final_output_state(NlmParams<T>& params, const std::vector<std::size_t>& ids) {
  if (ids.empty()) throw ConfigError("final_output_state: empty token stream");
  Tensor<T> out;
  std::vector<Tensor<T>> h(params.layers.size(), Tensor<T>::zeros({params.hidden_size()}));
  std::vector<Tensor<T>> c = h;
  for (std::size_t pos = 0; pos < ids.size(); ++pos) {
    Tape<T> tape;
    auto nlm = stage_nlm(tape, params, false);
    LstmState<T> state;
    for (std::size_t l = 0; l < h.size(); ++l) {
      state.h.push_back(tape.constant(h[l]));
      state.c.push_back(tape.constant(c[l]));
    }
    auto step = lstm_step_nodes(tape, nlm, state, tape.column(nlm.embed, ids[pos]));
    for (std::size_t l = 0; l < h.size(); ++l) {
      h[l] = tape.value(step.state.h[l]);
      c[l] = tape.value(step.state.c[l]);
    }
    out = tape.value(step.output);
  }
  return out;
}

struct GenerateOptions {
  std::optional<std::size_t> topic;
  std::size_t max_len = 30;
  std::size_t topn = 20;
  GActivation g = GActivation::identity;
  bool strict_topn = false;
};

/// Greedy token-by-token generation from <bos>. A forced topic pins the
/// topic weights to a one-hot, so the LTR context is the one-hot itself and
/// the ETR context is that topic's key-term embedding; otherwise the latent
/// vector is drawn once from the standard-normal prior. Key terms come from
/// the unmasked per-topic top-topN. With SDT the sentence context tracks the
/// generated prefix.
template <class T>
std::vector<std::string> generate(NlmParams<T>& nlm_params, NtmParams<T>& ntm_params,
                                  const Tensor<T>& embeddings, const DualVocab& vocab,
                                  const VariantConfig& variant, const GenerateOptions& opt,
                                  Rng& rng) {
  variant.validate();
  const std::size_t k = ntm_params.topic_count();
  if (opt.topic && *opt.topic >= k) throw ConfigError("generate: topic index out of range");

  Tensor<T> ones = Tensor<T>::full({ntm_params.vocab_size()}, T(1));
  TopicTerms global_terms = topic_extract(ntm_params.W, ones, opt.topn);

  Tensor<T> doc_ltr, doc_etr;
  if (opt.topic) {
    doc_ltr = Tensor<T>::zeros({k});
    doc_ltr[*opt.topic] = T(1);
    doc_etr = topic_embedding(embeddings, global_terms[*opt.topic], opt.strict_topn, opt.topn);
  } else {
    doc_ltr = gaussian_sample<T>(rng, {k});
    Tape<T> tape;
    doc_etr = tape.value(etr_node(tape, tape.constant(doc_ltr), tape.constant(embeddings),
                                  global_terms, opt.strict_topn, opt.topn));
  }

  std::vector<std::string> words;
  Sentence prefix;
  std::vector<Tensor<T>> h(nlm_params.layers.size(), Tensor<T>::zeros({nlm_params.hidden_size()}));
  std::vector<Tensor<T>> c = h;
  std::size_t prev = DualVocab::kBos;

  while (words.size() < opt.max_len) {
    Tape<T> tape;
    auto nlm = stage_nlm(tape, nlm_params, false);
    LstmState<T> state;
    for (std::size_t l = 0; l < h.size(); ++l) {
      state.h.push_back(tape.constant(h[l]));
      state.c.push_back(tape.constant(c[l]));
    }
    auto step = lstm_step_nodes(tape, nlm, state, tape.column(nlm.embed, prev));
    auto o_hat = step.output;
    if (variant.composes()) {
      ContextNodes<T> doc{tape.constant(doc_ltr), tape.constant(doc_etr)};
      ContextNodes<T> sent;
      if (variant.sdt) {
        auto bundle = make_topic_bundle(ntm_params, embeddings, bow<T>(sentence_view(prefix), vocab),
                                        opt.topn, RunMode::eval, nullptr, nullptr, opt.g,
                                        opt.strict_topn);
        sent.ltr = tape.constant(bundle.ltr);
        sent.etr = tape.constant(bundle.etr);
      }
      auto ctx = build_context_node(tape, variant, doc, variant.sdt ? &sent : nullptr);
      o_hat = compose_node(tape, nlm, step.output, ctx);
    }
    const Tensor<T>& lp = tape.value(predict_log_probs_node(tape, nlm, o_hat));
    std::size_t best = DualVocab::kEos;
    T best_lp = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < lp.size(); ++j) {
      if (j == DualVocab::kBos) continue;
      if (lp[j] > best_lp) {
        best_lp = lp[j];
        best = j;
      }
    }
    if (best == DualVocab::kEos) break;
    words.push_back(vocab.nlm_tokens[best]);
    prefix.push_back(vocab.nlm_tokens[best]);
    for (std::size_t l = 0; l < h.size(); ++l) {
      h[l] = tape.value(step.state.h[l]);
      c[l] = tape.value(step.state.c[l]);
    }
    prev = best;
  }
  return words;
}

/// Value-level convenience wrapper for tests: contexts given as plain
/// tensors, loss returned as a scalar.
template <class T>
T nlm_loss(NlmParams<T>& params, const VariantConfig& variant, const SequenceBatch& batch,
           const Tensor<T>* doc_ltr = nullptr, const Tensor<T>* doc_etr = nullptr,
           const std::vector<Tensor<T>>* sent_ltr = nullptr,
           const std::vector<Tensor<T>>* sent_etr = nullptr, T dropout_p = T(0),
           RunMode mode = RunMode::eval, Rng* rng = nullptr) {
  Tape<T> tape;
  auto nlm = stage_nlm(tape, params, false);
  ContextNodes<T> doc;
  if (doc_ltr) doc.ltr = tape.constant(*doc_ltr);
  if (doc_etr) doc.etr = tape.constant(*doc_etr);
  std::function<ContextNodes<T>(std::size_t)> sent_fn;
  if (variant.sdt)
    sent_fn = [&](std::size_t m) {
      ContextNodes<T> s;
      if (sent_ltr) s.ltr = tape.constant((*sent_ltr)[m]);
      if (sent_etr) s.etr = tape.constant((*sent_etr)[m]);
      return s;
    };
  return tape.value(nlm_loss_node(tape, nlm, variant, batch, doc, sent_fn, dropout_p, mode, rng))
      .item();
}

}  // namespace nclm
