#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "nclm/tensor.hpp"

namespace nclm {

struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

using Sentence = std::vector<std::string>;

struct Document {
  std::vector<Sentence> sentences;
  std::optional<std::string> label;
};

struct RawCorpus {
  std::vector<Document> docs;

  std::size_t sentence_count() const {
    std::size_t n = 0;
    for (const auto& d : docs) n += d.sentences.size();
    return n;
  }
  std::size_t token_count() const {
    std::size_t n = 0;
    for (const auto& d : docs)
      for (const auto& s : d.sentences) n += s.size();
    return n;
  }
};

// Fixed tokenization rule: lowercase, split on whitespace, then detach leading
// and trailing ASCII punctuation runs as single-character tokens.
inline Sentence tokenize(const std::string& line) {
  Sentence out;
  std::string lowered;
  lowered.reserve(line.size());
  for (char c : line) lowered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));

  std::istringstream is(lowered);
  std::string chunk;
  auto is_punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
  while (is >> chunk) {
    std::size_t lo = 0, hi = chunk.size();
    while (lo < hi && is_punct(chunk[lo])) ++lo;
    while (hi > lo && is_punct(chunk[hi - 1])) --hi;
    for (std::size_t i = 0; i < lo; ++i) out.push_back(std::string(1, chunk[i]));
    if (hi > lo) out.push_back(chunk.substr(lo, hi - lo));
    for (std::size_t i = hi; i < chunk.size(); ++i) out.push_back(std::string(1, chunk[i]));
  }
  return out;
}

enum class CorpusFormat { text, jsonl };

inline CorpusFormat corpus_format_for_path(const std::string& path) {
  return path.size() >= 6 && path.substr(path.size() - 6) == ".jsonl" ? CorpusFormat::jsonl
                                                                      : CorpusFormat::text;
}

/// Text format: one sentence per line, blank line separates documents.
/// JSONL format: one document per line, {"sentences": [...], "label": optional}.
inline RawCorpus load_corpus(const std::string& path, CorpusFormat format) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file: " + path);
  RawCorpus corpus;
  std::string line;
  std::size_t line_no = 0;

  if (format == CorpusFormat::text) {
    Document cur;
    auto flush = [&] {
      if (!cur.sentences.empty()) corpus.docs.push_back(std::move(cur));
      cur = Document{};
    };
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) {
        flush();
        continue;
      }
      Sentence s = tokenize(line);
      if (!s.empty()) cur.sentences.push_back(std::move(s));
    }
    flush();
  } else {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
      }
      if (!j.is_object() || !j.contains("sentences") || !j["sentences"].is_array())
        throw ParseError(path + ":" + std::to_string(line_no) +
                         ": expected object with \"sentences\" array");
      Document d;
      for (const auto& s : j["sentences"]) {
        if (!s.is_string())
          throw ParseError(path + ":" + std::to_string(line_no) + ": sentences must be strings");
        Sentence tok = tokenize(s.get<std::string>());
        if (!tok.empty()) d.sentences.push_back(std::move(tok));
      }
      if (j.contains("label")) {
        if (!j["label"].is_string())
          throw ParseError(path + ":" + std::to_string(line_no) + ": label must be a string");
        d.label = j["label"].get<std::string>();
      }
      if (!d.sentences.empty()) corpus.docs.push_back(std::move(d));
    }
  }
  if (corpus.docs.empty()) throw ParseError("corpus is empty: " + path);
  return corpus;
}

inline std::unordered_set<std::string> load_stopwords(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open stopword file: " + path);
  std::unordered_set<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

struct VocabOptions {
  std::size_t nlm_min_count = 10;
  std::size_t ntm_min_count = 100;
  double top_frac = 0.001;
};

/// NLM and NTM vocabularies with their distinct pruning rules. Indices are
/// assigned by (count desc, token asc); reserved tokens only exist on the
/// NLM side.
struct DualVocab {
  static constexpr std::size_t kUnk = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;

  std::vector<std::string> nlm_tokens;
  std::vector<std::string> ntm_tokens;
  std::unordered_map<std::string, std::size_t> nlm_index;
  std::unordered_map<std::string, std::size_t> ntm_index;
  std::unordered_set<std::string> stopwords;

  std::size_t nlm_size() const { return nlm_tokens.size(); }
  std::size_t ntm_size() const { return ntm_tokens.size(); }

  std::size_t nlm_id(const std::string& tok) const {
    auto it = nlm_index.find(tok);
    return it == nlm_index.end() ? kUnk : it->second;
  }
  /// Index in the NTM vocabulary, or npos when pruned/unknown.
  std::size_t ntm_id(const std::string& tok) const {
    auto it = ntm_index.find(tok);
    return it == ntm_index.end() ? npos : it->second;
  }
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  std::uint64_t nlm_hash() const { return hash_tokens(nlm_tokens); }
  std::uint64_t ntm_hash() const { return hash_tokens(ntm_tokens); }

  static std::uint64_t hash_tokens(const std::vector<std::string>& toks) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](char c) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    };
    for (const auto& t : toks) {
      for (char c : t) mix(c);
      mix('\n');
    }
    return h;
  }
};

inline DualVocab build_vocabs(const RawCorpus& corpus, const VocabOptions& opt,
                              std::unordered_set<std::string> stopwords) {
  if (opt.top_frac < 0.0 || opt.top_frac >= 1.0)
    throw ConfigError("top_frac must be in [0, 1)");

  std::map<std::string, std::size_t> counts;
  for (const auto& d : corpus.docs)
    for (const auto& s : d.sentences)
      for (const auto& tok : s) ++counts[tok];

  auto by_count_then_token = [&](const std::string& a, const std::string& b) {
    if (counts[a] != counts[b]) return counts[a] > counts[b];
    return a < b;
  };

  DualVocab vocab;
  vocab.stopwords = std::move(stopwords);
  vocab.nlm_tokens = {"<unk>", "<bos>", "<eos>"};

  std::vector<std::string> nlm_keep;
  for (const auto& [tok, n] : counts)
    if (n >= opt.nlm_min_count && tok != "<unk>" && tok != "<bos>" && tok != "<eos>")
      nlm_keep.push_back(tok);
  std::sort(nlm_keep.begin(), nlm_keep.end(), by_count_then_token);
  for (auto& t : nlm_keep) vocab.nlm_tokens.push_back(std::move(t));

  std::vector<std::string> cand;
  for (const auto& [tok, n] : counts) {
    if (n < opt.ntm_min_count) continue;
    if (vocab.stopwords.count(tok)) continue;
    if (tok == "<unk>" || tok == "<bos>" || tok == "<eos>") continue;
    cand.push_back(tok);
  }
  std::sort(cand.begin(), cand.end(), by_count_then_token);
  const std::size_t strip = static_cast<std::size_t>(
      std::ceil(opt.top_frac * static_cast<double>(cand.size())));
  if (strip < cand.size())
    vocab.ntm_tokens.assign(cand.begin() + static_cast<std::ptrdiff_t>(strip), cand.end());
  if (vocab.ntm_tokens.empty())
    throw ConfigError("ntm vocabulary is empty after pruning; lower ntm_min_count/top_frac");

  for (std::size_t i = 0; i < vocab.nlm_tokens.size(); ++i) vocab.nlm_index[vocab.nlm_tokens[i]] = i;
  for (std::size_t i = 0; i < vocab.ntm_tokens.size(); ++i) vocab.ntm_index[vocab.ntm_tokens[i]] = i;
  return vocab;
}

/// Document view with at most one sentence excluded (d or d-s).
struct DocView {
  const Document* doc = nullptr;
  std::ptrdiff_t skip_sentence = -1;

  template <class F>
  void for_each_token(F&& f) const {
    for (std::size_t si = 0; si < doc->sentences.size(); ++si) {
      if (static_cast<std::ptrdiff_t>(si) == skip_sentence) continue;
      for (const auto& tok : doc->sentences[si]) f(tok);
    }
  }
};

inline DocView full_view(const Document& d) { return DocView{&d, -1}; }

inline DocView doc_minus_sentence(const Document& d, std::size_t sentence_idx) {
  if (sentence_idx >= d.sentences.size())
    throw DimensionError("doc_minus_sentence: sentence index out of range");
  return DocView{&d, static_cast<std::ptrdiff_t>(sentence_idx)};
}

/// Sentence view with every occurrence of one token type removed (s-y).
struct SentenceView {
  const Sentence* sent = nullptr;
  std::optional<std::string> removed_type;

  template <class F>
  void for_each_token(F&& f) const {
    for (const auto& tok : *sent) {
      if (removed_type && tok == *removed_type) continue;
      f(tok);
    }
  }
};

inline SentenceView sentence_view(const Sentence& s) { return SentenceView{&s, std::nullopt}; }

inline SentenceView sentence_minus_word(const Sentence& s, const std::string& target_type) {
  return SentenceView{&s, target_type};
}

template <class T, class View>
Tensor<T> bow(const View& view, const DualVocab& vocab) {
  Tensor<T> v = Tensor<T>::zeros({vocab.ntm_size()});
  view.for_each_token([&](const std::string& tok) {
    const std::size_t id = vocab.ntm_id(tok);
    if (id != DualVocab::npos) v[id] += T(1);
  });
  return v;
}

/// Input/target id sequence for one <= max_seq_len chunk of a sentence.
/// Targets are inputs shifted by one; <bos> opens the sentence and <eos>
/// closes it.
struct SequenceBatch {
  std::vector<std::size_t> inputs;
  std::vector<std::size_t> targets;
  std::size_t doc_id = 0;
  std::size_t sentence_id = 0;
  std::size_t chunk_id = 0;

  std::size_t length() const { return inputs.size(); }
};

inline std::vector<SequenceBatch> make_sequences(const Sentence& sent, const DualVocab& vocab,
                                                 std::size_t max_seq_len, std::size_t doc_id,
                                                 std::size_t sentence_id) {
  if (max_seq_len == 0) throw ConfigError("max_seq_len must be positive");
  std::vector<std::size_t> stream;
  stream.reserve(sent.size() + 2);
  stream.push_back(DualVocab::kBos);
  for (const auto& tok : sent) stream.push_back(vocab.nlm_id(tok));
  stream.push_back(DualVocab::kEos);

  std::vector<SequenceBatch> out;
  std::size_t chunk = 0;
  for (std::size_t start = 0; start + 1 < stream.size(); start += max_seq_len) {
    SequenceBatch b;
    b.doc_id = doc_id;
    b.sentence_id = sentence_id;
    b.chunk_id = chunk++;
    const std::size_t end = std::min(start + max_seq_len, stream.size() - 1);
    for (std::size_t i = start; i < end; ++i) {
      b.inputs.push_back(stream[i]);
      b.targets.push_back(stream[i + 1]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace nclm
