#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "nclm/log.hpp"
#include "nclm/model.hpp"

namespace nclm {

/// Worker cap from NCLM_THREADS; defaults to 1 so results never depend on
/// scheduling unless parallelism is asked for explicitly.
inline std::size_t thread_count() {
  const char* env = std::getenv("NCLM_THREADS");
  if (!env) return 1;
  const long n = std::strtol(env, nullptr, 10);
  if (n < 1) return 1;
  return static_cast<std::size_t>(n);
}

/// Runs fn(i) for i in [0, n); results must be written to per-index slots.
template <class F>
void parallel_for(std::size_t n, F&& fn) {
  const std::size_t workers = std::min(thread_count(), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t lo = w * chunk, hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

/// Language-model perplexity: exp of the mean negative log-likelihood per
/// target token, eval mode (h = mu, no dropout), SDT contexts per position
/// when the variant demands them.
template <class T>
double lm_perplexity(Model<T>& model, const RawCorpus& corpus) {
  auto units = build_units<T>(corpus, model.vocab, model.cfg);
  if (units.empty()) throw ConfigError("lm_perplexity: empty evaluation set");
  std::vector<double> nll(units.size());
  std::vector<std::size_t> counts(units.size());
  parallel_for(units.size(), [&](std::size_t i) {
    Tape<T> tape;
    auto staged = stage_model(tape, model, false, false, false);
    auto losses = sentence_loss_nodes(tape, staged, model, units[i], RunMode::eval, RunMode::eval,
                                      nullptr);
    nll[i] = static_cast<double>(tape.value(losses.nlm_loss).item());
    counts[i] = losses.target_count;
  });
  double total = 0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < units.size(); ++i) {
    total += nll[i];
    tokens += counts[i];
  }
  return std::exp(total / static_cast<double>(tokens));
}

// ---- topic coherence ----

struct CoherenceConfig {
  std::vector<std::size_t> top_counts{5, 10, 15, 20};
  double eps = 1e-12;
  bool sliding_window = false;  // document-level co-occurrence by default
  std::size_t window_size = 10;
};

struct CoherenceResult {
  std::vector<double> per_topic;
  double average = 0;
  std::size_t skipped_pairs = 0;
};

/// NPMI(w_i, w_j) = log((p_ij + eps) / (p_i p_j)) / (-log(p_ij + eps)).
/// A pair present in every reference document is perfect association: 1.
inline double npmi_pair(double p_i, double p_j, double p_ij, double eps) {
  if (p_ij >= 1.0) return 1.0;
  return std::log((p_ij + eps) / (p_i * p_j)) / (-std::log(p_ij + eps));
}

/// Document-frequency statistics over the reference corpus. In sliding-window
/// mode every window of window_size tokens counts as one pseudo-document.
class CooccurrenceStats {
 public:
  CooccurrenceStats(const RawCorpus& reference, const CoherenceConfig& cfg) {
    std::vector<std::set<std::string>> doc_sets;
    if (!cfg.sliding_window) {
      for (const auto& d : reference.docs) {
        std::set<std::string> s;
        for (const auto& sent : d.sentences) s.insert(sent.begin(), sent.end());
        doc_sets.push_back(std::move(s));
      }
    } else {
      for (const auto& d : reference.docs) {
        std::vector<std::string> stream;
        for (const auto& sent : d.sentences) stream.insert(stream.end(), sent.begin(), sent.end());
        if (stream.empty()) continue;
        for (std::size_t lo = 0; lo < stream.size(); lo += cfg.window_size) {
          const std::size_t hi = std::min(stream.size(), lo + cfg.window_size);
          doc_sets.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(lo),
                                stream.begin() + static_cast<std::ptrdiff_t>(hi));
        }
      }
    }
    n_docs_ = doc_sets.size();
    for (const auto& s : doc_sets)
      for (const auto& w : s) ++df_[w];
    docs_ = std::move(doc_sets);
  }

  std::size_t doc_count() const { return n_docs_; }
  bool known(const std::string& w) const { return df_.count(w) > 0; }
  double p(const std::string& w) const {
    auto it = df_.find(w);
    return it == df_.end() ? 0.0 : static_cast<double>(it->second) / static_cast<double>(n_docs_);
  }
  double p_joint(const std::string& a, const std::string& b) const {
    std::size_t n = 0;
    for (const auto& s : docs_)
      if (s.count(a) && s.count(b)) ++n;
    return static_cast<double>(n) / static_cast<double>(n_docs_);
  }

 private:
  std::size_t n_docs_ = 0;
  std::map<std::string, std::size_t> df_;
  std::vector<std::set<std::string>> docs_;
};

/// Average pairwise NPMI of the top-n topic words for every topic and every
/// n in top_counts; words absent from the reference skip their pairs.
inline CoherenceResult npmi_coherence(const std::vector<std::vector<std::string>>& topics,
                                      const RawCorpus& reference, const CoherenceConfig& cfg) {
  if (reference.docs.empty()) throw ConfigError("npmi_coherence: empty reference corpus");
  CooccurrenceStats stats(reference, cfg);
  CoherenceResult result;
  std::set<std::string> warned;
  double cell_sum = 0;
  std::size_t cell_count = 0;
  for (const auto& words : topics) {
    double topic_sum = 0;
    std::size_t topic_cells = 0;
    for (std::size_t n : cfg.top_counts) {
      const std::size_t take = std::min(n, words.size());
      double pair_sum = 0;
      std::size_t pairs = 0;
      for (std::size_t i = 0; i < take; ++i)
        for (std::size_t j = i + 1; j < take; ++j) {
          if (!stats.known(words[i]) || !stats.known(words[j])) {
            ++result.skipped_pairs;
            for (const auto& w : {words[i], words[j]})
              if (!stats.known(w) && warned.insert(w).second)
                log_warn("npmi: word absent from reference, pairs skipped word=" + w);
            continue;
          }
          pair_sum += npmi_pair(stats.p(words[i]), stats.p(words[j]),
                                stats.p_joint(words[i], words[j]), cfg.eps);
          ++pairs;
        }
      if (pairs > 0) {
        topic_sum += pair_sum / static_cast<double>(pairs);
        ++topic_cells;
      }
    }
    const double topic_score = topic_cells ? topic_sum / static_cast<double>(topic_cells) : 0.0;
    result.per_topic.push_back(topic_score);
    if (topic_cells) {
      cell_sum += topic_score;
      ++cell_count;
    }
  }
  result.average = cell_count ? cell_sum / static_cast<double>(cell_count) : 0.0;
  return result;
}

// ---- feature export and retrieval ----

struct FeatureTable {
  std::vector<std::string> doc_ids;
  std::vector<std::string> labels;
  std::vector<std::vector<double>> rows;
};

/// Per document: final NLM output state over the whole token stream,
/// concatenated with the document topic representation c_d for the model's
/// variant (whole-document BoW, eval mode).
template <class T>
FeatureTable export_features(Model<T>& model, const RawCorpus& docs) {
  const VariantConfig variant = model.variant();
  FeatureTable table;
  table.doc_ids.resize(docs.docs.size());
  table.labels.resize(docs.docs.size());
  table.rows.resize(docs.docs.size());
  for (std::size_t i = 0; i < docs.docs.size(); ++i) {
    std::size_t tokens = 0;
    for (const auto& s : docs.docs[i].sentences) tokens += s.size();
    if (tokens == 0) throw ConfigError("export_features: zero-length document");
  }
  parallel_for(docs.docs.size(), [&](std::size_t i) {
    const Document& doc = docs.docs[i];
    std::vector<std::size_t> ids{DualVocab::kBos};
    for (const auto& s : doc.sentences)
      for (const auto& tok : s) ids.push_back(model.vocab.nlm_id(tok));
    Tensor<T> o = final_output_state(model.nlm, ids);

    std::vector<double> row(o.data.begin(), o.data.end());
    if (variant.composes()) {
      auto b = make_topic_bundle(model.ntm, model.topic_emb, bow<T>(full_view(doc), model.vocab),
                                 model.cfg.topN, RunMode::eval, nullptr, nullptr, model.cfg.g(),
                                 model.cfg.strict_topn_divisor);
      if (variant.uses_ltr())
        row.insert(row.end(), b.ltr.data.begin(), b.ltr.data.end());
      if (variant.uses_etr())
        row.insert(row.end(), b.etr.data.begin(), b.etr.data.end());
    }
    table.doc_ids[i] = "doc" + std::to_string(i);
    table.labels[i] = doc.label.value_or("");
    table.rows[i] = std::move(row);
  });
  return table;
}

inline void write_features_csv(const FeatureTable& t, std::ostream& out) {
  std::size_t dim = t.rows.empty() ? 0 : t.rows[0].size();
  out << "doc_id,label";
  for (std::size_t i = 0; i < dim; ++i) out << ",f" << i;
  out << "\n";
  out.precision(17);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    out << t.doc_ids[r] << "," << t.labels[r];
    for (double v : t.rows[r]) out << "," << v;
    out << "\n";
  }
}

inline void write_features_jsonl(const FeatureTable& t, std::ostream& out) {
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    nlohmann::json j;
    j["doc_id"] = t.doc_ids[r];
    j["label"] = t.labels[r];
    j["features"] = t.rows[r];
    out << j.dump() << "\n";
  }
}

struct RetrievalResult {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> p_at_k;
  std::map<std::size_t, std::vector<double>> per_query;
};

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Every test document queries the training set; rank by cosine similarity
/// (ties toward the lower training index), p@k is the fraction of the top k
/// sharing the query's label, averaged over queries.
inline RetrievalResult retrieval_eval(const FeatureTable& train, const FeatureTable& test,
                                      std::vector<std::size_t> ks = {5, 10}) {
  for (std::size_t k : ks)
    if (k == 0 || k > train.rows.size())
      throw ConfigError("retrieval_eval: k=" + std::to_string(k) +
                        " exceeds training set size " + std::to_string(train.rows.size()));
  RetrievalResult result;
  result.ks = ks;
  for (std::size_t k : ks) result.per_query[k].resize(test.rows.size());

  parallel_for(test.rows.size(), [&](std::size_t q) {
    std::vector<std::pair<double, std::size_t>> scored(train.rows.size());
    for (std::size_t i = 0; i < train.rows.size(); ++i)
      scored[i] = {cosine_similarity(test.rows[q], train.rows[i]), i};
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (std::size_t k : ks) {
      std::size_t hits = 0;
      for (std::size_t r = 0; r < k; ++r)
        if (train.labels[scored[r].second] == test.labels[q]) ++hits;
      result.per_query[k][q] = static_cast<double>(hits) / static_cast<double>(k);
    }
  });
  for (std::size_t k : ks) {
    const auto& v = result.per_query[k];
    result.p_at_k[k] = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  }
  return result;
}

// ---- SDT cost benchmark ----

struct BenchPoint {
  std::size_t sentence_len = 0;
  double context_ms = 0;  // topic-context construction per sentence
};

/// Measures per-sentence topic-context construction cost for one variant at
/// several sentence lengths. Without SDT a sentence needs one d-s bundle
/// regardless of length; with SDT it needs one per target position.
template <class T>
std::vector<BenchPoint> context_scaling_bench(const std::vector<std::size_t>& sizes,
                                              const VariantConfig& variant, std::size_t z,
                                              std::size_t k, std::size_t de, std::size_t topn,
                                              std::size_t reps, std::uint64_t seed) {
  variant.validate();
  TrainConfig cfg;
  cfg.K = k;
  cfg.topN = topn;
  cfg.variant = variant_name(variant.kind);
  cfg.sdt = variant.sdt;
  cfg.ntm_hidden = 128;
  cfg.max_seq_len = *std::max_element(sizes.begin(), sizes.end()) + 2;
  cfg.seed = seed;

  Rng rng(seed);
  NtmParams<T> ntm = NtmParams<T>::init(z, k, cfg.ntm_hidden, rng);
  Tensor<T> emb = uniform_sample<T>(rng, {de, z}, T(-0.1), T(0.1));

  // synthetic vocab w0..w{z-1}; sentences use distinct tokens so the type
  // cache cannot collapse the per-position work
  DualVocab vocab;
  vocab.nlm_tokens = {"<unk>", "<bos>", "<eos>"};
  for (std::size_t i = 0; i < z; ++i) {
    vocab.ntm_tokens.push_back("w" + std::to_string(i));
    vocab.nlm_tokens.push_back("w" + std::to_string(i));
  }
  for (std::size_t i = 0; i < vocab.nlm_tokens.size(); ++i) vocab.nlm_index[vocab.nlm_tokens[i]] = i;
  for (std::size_t i = 0; i < vocab.ntm_tokens.size(); ++i) vocab.ntm_index[vocab.ntm_tokens[i]] = i;

  std::vector<BenchPoint> out;
  for (std::size_t m : sizes) {
    Document doc;
    std::size_t next = 0;
    for (int s = 0; s < 4; ++s) {
      Sentence sent;
      for (std::size_t i = 0; i < m; ++i) sent.push_back("w" + std::to_string(next++ % z));
      doc.sentences.push_back(std::move(sent));
    }
    const Sentence& target = doc.sentences[0];
    Tensor<T> ctx_bow = bow<T>(doc_minus_sentence(doc, 0), vocab);

    // parameters are staged once; the timed region is the per-sentence
    // topic-context construction itself
    Tape<T> tape(false);
    auto vars = stage_ntm(tape, ntm, false);
    auto embn = tape.constant(emb);
    auto build_contexts = [&](bool sdt) {
      auto post = sample_h_nodes(tape, vars, tape.constant(ctx_bow), RunMode::eval, nullptr);
      if (variant.uses_etr()) {
        TopicTerms terms = topic_extract(tape.value(vars.W), ctx_bow, topn);
        (void)etr_node(tape, post.h, embn, terms, false, topn);
      }
      if (!sdt) return;
      std::unordered_map<std::string, bool> cache;
      for (std::size_t pos = 0; pos <= target.size(); ++pos) {
        const bool has_type = pos < target.size();
        const std::string key = has_type ? target[pos] : std::string("\x1e");
        if (cache.count(key)) continue;
        cache[key] = true;
        Tensor<T> sbow = has_type ? bow<T>(sentence_minus_word(target, key), vocab)
                                  : bow<T>(sentence_view(target), vocab);
        auto spost = sample_h_nodes(tape, vars, tape.constant(sbow), RunMode::eval, nullptr);
        if (variant.uses_etr()) {
          TopicTerms terms = topic_extract(tape.value(vars.W), sbow, topn);
          (void)etr_node(tape, spost.h, embn, terms, false, topn);
        }
      }
    };

    using clock = std::chrono::steady_clock;
    for (int w = 0; w < 3; ++w) build_contexts(variant.sdt);  // warm-up
    std::vector<double> times;
    times.reserve(reps);
    for (std::size_t r = 0; r < reps; ++r) {
      auto t0 = clock::now();
      build_contexts(variant.sdt);
      auto t1 = clock::now();
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    BenchPoint p;
    p.sentence_len = m;
    p.context_ms = times[times.size() / 2];
    out.push_back(p);
  }
  return out;
}

}  // namespace nclm
