#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "nclm/corpus.hpp"
#include "nclm/ntm.hpp"
#include "nclm/tape.hpp"
#include "nclm/tensor.hpp"

namespace nclm {

using TopicTerms = std::vector<std::vector<std::size_t>>;

/// TOPIC-EXTRACT: per-topic topN vocabulary indices of W restricted to
/// columns with a nonzero document count. Ties break toward the lower index;
/// documents with fewer than topN distinct in-vocab words yield all of them.
template <class T>
TopicTerms topic_extract(const Tensor<T>& w, const Tensor<T>& bow_vec, std::size_t topn) {
  if (topn < 1) throw ConfigError("topic_extract: topN must be >= 1");
  if (!w.is_matrix() || w.cols() != bow_vec.size())
    throw DimensionError("topic_extract: W columns must match BoW length");
  std::vector<std::size_t> present;
  for (std::size_t i = 0; i < bow_vec.size(); ++i)
    if (bow_vec[i] != T(0)) present.push_back(i);

  TopicTerms terms(w.rows());
  for (std::size_t k = 0; k < w.rows(); ++k) {
    std::vector<std::size_t> cand = present;
    std::sort(cand.begin(), cand.end(), [&](std::size_t a, std::size_t b) {
      if (w.at(k, a) != w.at(k, b)) return w.at(k, a) > w.at(k, b);
      return a < b;
    });
    if (cand.size() > topn) cand.resize(topn);
    terms[k] = std::move(cand);
  }
  return terms;
}

/// z^k: average of the embedding columns of one topic's extracted terms.
/// Divides by the actual term count unless strict_topn, which divides by
/// topN even when fewer terms were found. Empty term lists give zero.
template <class T>
Tensor<T> topic_embedding(const Tensor<T>& embeddings, const std::vector<std::size_t>& terms,
                          bool strict_topn = false, std::size_t topn = 0) {
  Tensor<T> z = Tensor<T>::zeros({embeddings.rows()});
  if (terms.empty()) return z;
  const T divisor = strict_topn ? static_cast<T>(topn) : static_cast<T>(terms.size());
  for (std::size_t j : terms)
    for (std::size_t i = 0; i < embeddings.rows(); ++i) z[i] += embeddings.at(i, j);
  for (auto& v : z.data) v /= divisor;
  return z;
}

template <class T>
std::vector<T> etr_divisors(const TopicTerms& terms, bool strict_topn, std::size_t topn) {
  std::vector<T> div;
  div.reserve(terms.size());
  for (const auto& t : terms)
    div.push_back(strict_topn ? static_cast<T>(topn) : static_cast<T>(std::max<std::size_t>(t.size(), 1)));
  return div;
}

/// GET-ETR on the tape: z_att = sum_k softmax(h)_k * z^k. The extracted terms
/// are constants of the forward pass; gradients flow through h and (when the
/// embedding leaf is trainable) through E.
template <class T>
typename Tape<T>::Index etr_node(Tape<T>& tape, typename Tape<T>::Index h_node,
                                 typename Tape<T>::Index emb_node, const TopicTerms& terms,
                                 bool strict_topn = false, std::size_t topn = 0) {
  auto zstack = tape.mean_columns(emb_node, terms, etr_divisors<T>(terms, strict_topn, topn));
  return tape.matvec_t(zstack, tape.softmax(h_node));
}

/// Per-context topic representations: LTR vector h, ETR vector z_att, the
/// softmax weights, and the extracted key-term lists.
template <class T>
struct TopicBundle {
  Tensor<T> ltr;
  Tensor<T> etr;
  Tensor<T> weights;
  TopicTerms terms;
  bool empty_bow = false;
};

template <class T>
TopicBundle<T> make_topic_bundle(NtmParams<T>& params, const Tensor<T>& embeddings,
                                 const Tensor<T>& bow_vec, std::size_t topn, RunMode mode,
                                 Rng* rng = nullptr, std::type_identity_t<const Tensor<T>*> eps_override = nullptr,
                                 GActivation g = GActivation::identity,
                                 bool strict_topn = false) {
  Tape<T> tape;
  auto ntm = stage_ntm(tape, params, false);
  auto post = sample_h_nodes(tape, ntm, tape.constant(bow_vec), mode, rng, eps_override, g);
  TopicBundle<T> out;
  out.terms = topic_extract(params.W, bow_vec, topn);
  out.ltr = tape.value(post.h);
  auto emb = tape.constant(embeddings);
  out.etr = tape.value(etr_node(tape, post.h, emb, out.terms, strict_topn, topn));
  out.weights = tape.value(tape.softmax(post.h));
  out.empty_bow = true;
  for (std::size_t i = 0; i < bow_vec.size(); ++i)
    if (bow_vec[i] != T(0)) {
      out.empty_bow = false;
      break;
    }
  return out;
}

/// Global (unmasked) top-topN words per topic, for inspection and coherence.
template <class T>
std::vector<std::vector<std::string>> topic_report(const NtmParams<T>& params,
                                                   const DualVocab& vocab, std::size_t topn) {
  Tensor<T> ones = Tensor<T>::full({params.vocab_size()}, T(1));
  TopicTerms terms = topic_extract(params.W, ones, topn);
  std::vector<std::vector<std::string>> words(terms.size());
  for (std::size_t k = 0; k < terms.size(); ++k)
    for (std::size_t j : terms[k]) words[k].push_back(vocab.ntm_tokens.at(j));
  return words;
}

}  // namespace nclm
