#pragma once

#include <cassert>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "nclm/config.hpp"
#include "nclm/corpus.hpp"
#include "nclm/embeddings.hpp"
#include "nclm/nlm.hpp"
#include "nclm/ntm.hpp"
#include "nclm/topics.hpp"

namespace nclm {

template <class T>
struct Model {
  TrainConfig cfg;
  DualVocab vocab;
  NtmParams<T> ntm;
  NlmParams<T> nlm;
  Tensor<T> topic_emb;  // E, [De x Z]

  VariantConfig variant() const { return cfg.variant_config(); }
  std::size_t topic_embed_dim() const { return topic_emb.rows(); }

  NamedParams<T> all_params() {
    NamedParams<T> out = ntm.named_params();
    for (auto& p : nlm.named_params()) out.push_back(p);
    out.emplace_back("emb.E", &topic_emb);
    return out;
  }
};

template <class T>
Model<T> build_model(const TrainConfig& cfg, const RawCorpus& train_corpus,
                     const EmbeddingFile* pretrained,
                     const std::unordered_set<std::string>& stopwords) {
  Model<T> m;
  m.cfg = cfg;
  m.vocab = build_vocabs(train_corpus, cfg.vocab_options(), stopwords);
  Rng rng(cfg.seed);

  const std::size_t de = pretrained ? pretrained->dim : cfg.topic_embed_dim;
  if (pretrained) {
    m.topic_emb = Tensor<T>::zeros({de, m.vocab.ntm_size()});
    for (std::size_t j = 0; j < m.vocab.ntm_size(); ++j) {
      auto it = pretrained->vectors.find(m.vocab.ntm_tokens[j]);
      const std::vector<double> col = it != pretrained->vectors.end()
                                          ? it->second
                                          : missing_embedding(m.vocab.ntm_tokens[j], de, cfg.seed);
      for (std::size_t i = 0; i < de; ++i) m.topic_emb.at(i, j) = static_cast<T>(col[i]);
    }
  } else {
    m.topic_emb = random_embeddings<T>(de, m.vocab, cfg.seed);
  }

  m.ntm = NtmParams<T>::init(m.vocab.ntm_size(), cfg.K, cfg.ntm_hidden, rng);
  const VariantConfig variant = cfg.variant_config();
  variant.validate();
  m.nlm = NlmParams<T>::init(m.vocab.nlm_size(), cfg.embed_dim, cfg.lstm_hidden, cfg.lstm_layers,
                             variant.context_dim(cfg.K, de), rng, &m.vocab, pretrained);
  return m;
}

/// One training/eval example: a <= max_seq_len chunk of a sentence together
/// with its leak-free document BoW (d-s) and the BoW the NTM loss models.
template <class T>
struct ChunkUnit {
  SequenceBatch seq;
  const Sentence* sentence = nullptr;
  std::size_t chunk_offset = 0;  // sentence token index of the first target
  std::shared_ptr<const Tensor<T>> ctx_bow;
  std::shared_ptr<const Tensor<T>> loss_bow;
};

template <class T>
std::vector<ChunkUnit<T>> build_units(const RawCorpus& corpus, const DualVocab& vocab,
                                      const TrainConfig& cfg) {
  std::vector<ChunkUnit<T>> units;
  for (std::size_t d = 0; d < corpus.docs.size(); ++d) {
    const Document& doc = corpus.docs[d];
    std::shared_ptr<const Tensor<T>> whole;
    if (cfg.whole_doc_ntm)
      whole = std::make_shared<const Tensor<T>>(bow<T>(full_view(doc), vocab));
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      auto ctx = std::make_shared<const Tensor<T>>(bow<T>(doc_minus_sentence(doc, s), vocab));
      auto loss_bow = cfg.whole_doc_ntm ? whole : ctx;
      for (auto& seq : make_sequences(doc.sentences[s], vocab, cfg.max_seq_len, d, s)) {
        ChunkUnit<T> u;
        u.chunk_offset = seq.chunk_id * cfg.max_seq_len;
        u.seq = std::move(seq);
        u.sentence = &doc.sentences[s];
        u.ctx_bow = ctx;
        u.loss_bow = loss_bow;
        units.push_back(std::move(u));
      }
    }
  }
  return units;
}

template <class T>
std::vector<Tensor<T>> doc_bows(const RawCorpus& corpus, const DualVocab& vocab) {
  std::vector<Tensor<T>> out;
  out.reserve(corpus.docs.size());
  for (const auto& d : corpus.docs) out.push_back(bow<T>(full_view(d), vocab));
  return out;
}

template <class T>
struct StagedModel {
  NtmVars<T> ntm;
  NlmVars<T> nlm;
  typename Tape<T>::Index emb;
};

template <class T>
StagedModel<T> stage_model(Tape<T>& tape, Model<T>& m, bool train_ntm, bool train_nlm,
                           bool train_emb) {
  return StagedModel<T>{stage_ntm(tape, m.ntm, train_ntm), stage_nlm(tape, m.nlm, train_nlm),
                        tape.leaf(m.topic_emb, train_emb)};
}

template <class T>
struct SentenceLossNodes {
  typename Tape<T>::Index ntm_loss;
  typename Tape<T>::Index nlm_loss;
  std::size_t target_count = 0;
};

/// Builds the combined per-chunk graph: NTM loss on the modeled BoW, topic
/// contexts from the leak-free d-s BoW, per-position s-y contexts when SDT is
/// on (cached per removed word type), and the NLM loss.
template <class T>
SentenceLossNodes<T> sentence_loss_nodes(Tape<T>& tape, const StagedModel<T>& staged,
                                         Model<T>& model, const ChunkUnit<T>& unit,
                                         RunMode ntm_mode, RunMode nlm_mode, Rng* rng) {
  const VariantConfig variant = model.variant();
  variant.validate();
  const GActivation g = model.cfg.g();
  const std::size_t topn = model.cfg.topN;
  const bool strict = model.cfg.strict_topn_divisor;

  auto loss_bow_node = tape.constant(*unit.loss_bow);
  auto post_loss = sample_h_nodes(tape, staged.ntm, loss_bow_node, ntm_mode, rng, nullptr, g);
  auto ntm_l = ntm_loss_node(tape, staged.ntm, loss_bow_node, post_loss);

  ContextNodes<T> doc;
  std::function<ContextNodes<T>(std::size_t)> sent_fn;
  std::shared_ptr<std::unordered_map<std::string, ContextNodes<T>>> cache;
  if (variant.composes()) {
    auto post_ctx = post_loss;
    if (model.cfg.whole_doc_ntm)
      post_ctx =
          sample_h_nodes(tape, staged.ntm, tape.constant(*unit.ctx_bow), ntm_mode, rng, nullptr, g);
    if (variant.uses_ltr()) doc.ltr = post_ctx.h;
    if (variant.uses_etr()) {
      TopicTerms terms = topic_extract(tape.value(staged.ntm.W), *unit.ctx_bow, topn);
      doc.etr = etr_node(tape, post_ctx.h, staged.emb, terms, strict, topn);
    }

    if (variant.sdt) {
      cache = std::make_shared<std::unordered_map<std::string, ContextNodes<T>>>();
      const Sentence* sentence = unit.sentence;
      const std::size_t offset = unit.chunk_offset;
      auto& vocab = model.vocab;
      auto& tape_ref = tape;
      auto& ntm_vars = staged.ntm;
      auto emb_var = staged.emb;
      const bool once = model.cfg.sdt_once_per_sentence;
      sent_fn = [&tape_ref, &ntm_vars, emb_var, &vocab, sentence, offset, cache, variant, g, topn,
                 strict, ntm_mode, rng, once](std::size_t m) -> ContextNodes<T> {
        // the removed type is the target token; <eos> (and padding-free
        // chunk ends) remove nothing
        const std::size_t tok_idx = offset + m;
        const bool has_type = !once && tok_idx < sentence->size();
        const std::string key = has_type ? (*sentence)[tok_idx] : std::string("\x1e");
        auto it = cache->find(key);
        if (it != cache->end()) return it->second;

        Tensor<T> sbow = has_type
                             ? bow<T>(sentence_minus_word(*sentence, key), vocab)
                             : bow<T>(sentence_view(*sentence), vocab);
        if (has_type) {
          const std::size_t id = vocab.ntm_id(key);
          if (id != DualVocab::npos && sbow[id] != T(0))
            throw std::logic_error("sdt context leaked the target type: " + key);
        }
        ContextNodes<T> ctx;
        auto bnode = tape_ref.constant(sbow);
        auto post = sample_h_nodes(tape_ref, ntm_vars, bnode, ntm_mode, rng, nullptr, g);
        if (variant.uses_ltr()) ctx.ltr = post.h;
        if (variant.uses_etr()) {
          TopicTerms terms = topic_extract(tape_ref.value(ntm_vars.W), sbow, topn);
          ctx.etr = etr_node(tape_ref, post.h, emb_var, terms, strict, topn);
        }
        (*cache)[key] = ctx;
        return ctx;
      };
    }
  }

  auto nlm_l = nlm_loss_node(tape, staged.nlm, variant, unit.seq, doc, sent_fn,
                             static_cast<T>(model.cfg.dropout), nlm_mode, rng);
  return SentenceLossNodes<T>{ntm_l, nlm_l, unit.seq.length()};
}

/// L = alpha * L_ntm + (1 - alpha) * L_nlm.
template <class T>
typename Tape<T>::Index joint_loss_node(Tape<T>& tape, const SentenceLossNodes<T>& losses,
                                        T alpha) {
  return tape.add(tape.scale(losses.ntm_loss, alpha), tape.scale(losses.nlm_loss, T(1) - alpha));
}

template <class T>
T joint_loss(T ntm_loss_val, T nlm_loss_val, T alpha) {
  return alpha * ntm_loss_val + (T(1) - alpha) * nlm_loss_val;
}

}  // namespace nclm
