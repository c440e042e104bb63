#include <cstdio>
#include <fstream>

#include "doctest.h"
#include "nclm/corpus.hpp"
#include "nclm/embeddings.hpp"
#include "nclm/rng.hpp"
#include "oracles.hpp"

using namespace nclm;

namespace {

const std::string kFixtures = NCLM_FIXTURE_DIR;

RawCorpus random_corpus(Rng& rng, std::size_t n_docs, std::size_t max_sents,
                        std::size_t max_len, std::size_t n_types) {
  RawCorpus c;
  for (std::size_t d = 0; d < n_docs; ++d) {
    Document doc;
    const std::size_t ns = 1 + static_cast<std::size_t>(rng.uniform() * max_sents);
    for (std::size_t s = 0; s < ns; ++s) {
      Sentence sent;
      const std::size_t len = 1 + static_cast<std::size_t>(rng.uniform() * max_len);
      for (std::size_t i = 0; i < len; ++i)
        sent.push_back("w" + std::to_string(static_cast<std::size_t>(rng.uniform() * n_types)));
      doc.sentences.push_back(std::move(sent));
    }
    c.docs.push_back(std::move(doc));
  }
  return c;
}

DualVocab tiny_vocab(const RawCorpus& c) {
  VocabOptions opt;
  opt.nlm_min_count = 1;
  opt.ntm_min_count = 1;
  opt.top_frac = 0.0;
  return build_vocabs(c, opt, {});
}

}  // namespace

TEST_CASE("tokenizer lowercases and detaches punctuation") {
  auto t = tokenize("The cat, (quietly) SAT.");
  Sentence expected{"the", "cat", ",", "(", "quietly", ")", "sat", "."};
  CHECK(t == expected);
  CHECK(tokenize("...").size() == 3);
  CHECK(tokenize("don't").size() == 1);
}

TEST_CASE("text corpus loads documents split on blank lines") {
  RawCorpus c = load_corpus(kFixtures + "/corpus_small.txt", CorpusFormat::text);
  REQUIRE(c.docs.size() == 2);
  CHECK(c.docs[0].sentences.size() == 2);
  CHECK(c.docs[1].sentences.size() == 3);
  CHECK(c.docs[0].sentences[0][0] == "the");
}

TEST_CASE("empty corpus file is an error") {
  const std::string path = "/tmp/nclm_empty_corpus.txt";
  std::ofstream(path).close();
  CHECK_THROWS_AS(load_corpus(path, CorpusFormat::text), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("jsonl corpus carries labels and reports bad lines") {
  RawCorpus c = load_corpus(kFixtures + "/labeled_small.jsonl", CorpusFormat::jsonl);
  REQUIRE(c.docs.size() == 3);
  CHECK(c.docs[0].label == "left");
  CHECK(c.docs[1].label == "right");
  CHECK(c.docs[0].sentences.size() == 2);

  const std::string path = "/tmp/nclm_bad.jsonl";
  {
    std::ofstream out(path);
    out << "{\"sentences\": [\"ok one\"]}\n";
    out << "{\"nope\": 1}\n";
  }
  try {
    load_corpus(path, CorpusFormat::jsonl);
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("vocab pruning rules") {
  // toy corpus where "the" is the most frequent token
  RawCorpus c = load_corpus(kFixtures + "/corpus_small.txt", CorpusFormat::text);
  RawCorpus toy;
  Document d;
  d.sentences = {{"the", "cat", "the", "dog", "the", "bird"}, {"the", "cat", "ran"}};
  toy.docs.push_back(d);
  VocabOptions opt;
  opt.nlm_min_count = 1;
  opt.ntm_min_count = 1;
  opt.top_frac = 0.05;  // strips ceil(0.05 * |cand|) = 1 token, the most frequent
  DualVocab v = build_vocabs(toy, opt, {});
  CHECK(v.ntm_index.count("the") == 0);
  CHECK(v.nlm_index.count("the") == 1);
  CHECK(v.ntm_index.count("cat") == 1);

  SUBCASE("min count excludes rare tokens from nlm vocab") {
    VocabOptions hi;
    hi.nlm_min_count = 10;
    hi.ntm_min_count = 1;
    hi.top_frac = 0.0;
    DualVocab v2 = build_vocabs(c, hi, {});
    CHECK(v2.nlm_index.count("cat") == 0);  // count 1 < 10
    CHECK(v2.nlm_id("cat") == DualVocab::kUnk);
  }

  SUBCASE("stopwords never reach the ntm vocab") {
    auto sw = load_stopwords(kFixtures + "/stopwords_test.txt");
    DualVocab v3 = build_vocabs(c, opt, sw);
    CHECK(v3.ntm_index.count("a") == 0);
    CHECK(v3.ntm_index.count("on") == 0);
    CHECK(v3.nlm_index.count("on") == 1);
  }

  SUBCASE("empty ntm vocab is a configuration error") {
    VocabOptions bad;
    bad.ntm_min_count = 1000;
    CHECK_THROWS_AS(build_vocabs(c, bad, {}), ConfigError);
  }
}

TEST_CASE("vocab membership matches an independent recount") {
  Rng rng(77);
  RawCorpus c = random_corpus(rng, 30, 5, 12, 40);
  VocabOptions opt;
  opt.nlm_min_count = 4;
  opt.ntm_min_count = 6;
  opt.top_frac = 0.1;
  DualVocab v = build_vocabs(c, opt, {});

  std::unordered_map<std::string, std::size_t> recount;
  for (const auto& d : c.docs)
    for (const auto& s : d.sentences)
      for (const auto& tok : s) ++recount[tok];

  std::size_t stripped = static_cast<std::size_t>(std::ceil(
      opt.top_frac * static_cast<double>(std::count_if(recount.begin(), recount.end(), [&](auto& kv) {
        return kv.second >= opt.ntm_min_count;
      }))));
  // threshold: the `stripped` highest counts are gone from the ntm vocab
  std::vector<std::size_t> cand_counts;
  for (auto& [tok, n] : recount)
    if (n >= opt.ntm_min_count) cand_counts.push_back(n);
  std::sort(cand_counts.rbegin(), cand_counts.rend());

  for (int i = 0; i < 100; ++i) {
    const std::string tok = "w" + std::to_string(static_cast<std::size_t>(rng.uniform() * 40));
    const std::size_t n = recount.count(tok) ? recount[tok] : 0;
    CHECK((v.nlm_index.count(tok) == 1) == (n >= opt.nlm_min_count));
    if (n < opt.ntm_min_count) CHECK(v.ntm_index.count(tok) == 0);
  }
  CHECK(v.ntm_size() + stripped == cand_counts.size());
}

TEST_CASE("vocab determinism with lexicographic tie-break") {
  Rng rng(101);
  RawCorpus c = random_corpus(rng, 10, 4, 8, 20);
  DualVocab a = tiny_vocab(c);
  DualVocab b = tiny_vocab(c);
  CHECK(a.nlm_tokens == b.nlm_tokens);
  CHECK(a.ntm_tokens == b.ntm_tokens);
  // equal-count tokens must appear in lexicographic order
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& d : c.docs)
    for (const auto& s : d.sentences)
      for (const auto& tok : s) ++counts[tok];
  for (std::size_t i = 0; i + 1 < a.ntm_tokens.size(); ++i) {
    const auto &x = a.ntm_tokens[i], &y = a.ntm_tokens[i + 1];
    if (counts[x] == counts[y]) CHECK(x < y);
  }
}

TEST_CASE("bow basics") {
  RawCorpus c;
  Document d;
  d.sentences.push_back({"apple", "apple", "banana"});
  c.docs.push_back(d);
  DualVocab v = tiny_vocab(c);

  auto b = bow<double>(sentence_view(c.docs[0].sentences[0]), v);
  CHECK(b[v.ntm_id("apple")] == 2.0);
  CHECK(b[v.ntm_id("banana")] == 1.0);

  Document empty_doc;
  empty_doc.sentences.push_back({});
  auto zero = bow<double>(full_view(empty_doc), v);
  for (double x : zero.data) CHECK(x == 0.0);
}

TEST_CASE("bow additivity: bow(d) == bow(d-s) + bow(s)") {
  Rng rng(303);
  RawCorpus c = random_corpus(rng, 40, 8, 10, 30);
  DualVocab v = tiny_vocab(c);
  int checked = 0;
  for (const auto& doc : c.docs) {
    for (std::size_t si = 0; si < doc.sentences.size() && checked < 100; ++si, ++checked) {
      auto whole = bow<double>(full_view(doc), v);
      auto rest = bow<double>(doc_minus_sentence(doc, si), v);
      auto sent = bow<double>(sentence_view(doc.sentences[si]), v);
      for (std::size_t i = 0; i < whole.size(); ++i)
        CHECK(whole[i] == rest[i] + sent[i]);
    }
  }
  CHECK(checked >= 100);
}

TEST_CASE("doc_minus_sentence views") {
  Document d;
  d.sentences = {{"one"}, {"two"}, {"three"}};
  auto view = doc_minus_sentence(d, 1);
  std::vector<std::string> seen;
  view.for_each_token([&](const std::string& t) { seen.push_back(t); });
  CHECK(seen == std::vector<std::string>{"one", "three"});
  CHECK_THROWS_AS(doc_minus_sentence(d, 3), DimensionError);

  Document single;
  single.sentences = {{"lonely", "words"}};
  RawCorpus c;
  c.docs.push_back(single);
  DualVocab v = tiny_vocab(c);
  auto zero = bow<double>(doc_minus_sentence(single, 0), v);
  for (double x : zero.data) CHECK(x == 0.0);

  // removal strictly reduces counts when the sentence has in-vocab tokens
  auto whole = bow<double>(full_view(single), v);
  double total_whole = 0, total_rest = 0;
  for (double x : whole.data) total_whole += x;
  for (double x : zero.data) total_rest += x;
  CHECK(total_rest < total_whole);
}

TEST_CASE("sentence_minus_word removes the whole token type") {
  Sentence s{"a", "b", "a"};
  std::vector<std::string> seen;
  sentence_minus_word(s, "a").for_each_token([&](const std::string& t) { seen.push_back(t); });
  CHECK(seen == std::vector<std::string>{"b"});

  seen.clear();
  sentence_minus_word(s, "z").for_each_token([&](const std::string& t) { seen.push_back(t); });
  CHECK(seen.size() == 3);
}

TEST_CASE("target type has zero count in bow(s-y) across a random corpus") {
  Rng rng(909);
  RawCorpus c = random_corpus(rng, 10, 4, 8, 15);
  DualVocab v = tiny_vocab(c);
  for (const auto& doc : c.docs)
    for (const auto& sent : doc.sentences)
      for (const auto& y : sent) {
        auto b = bow<double>(sentence_minus_word(sent, y), v);
        const std::size_t id = v.ntm_id(y);
        if (id != DualVocab::npos) CHECK(b[id] == 0.0);
      }
}

TEST_CASE("sequence chunking reproduces the token stream") {
  RawCorpus c;
  Document d;
  Sentence s;
  for (int i = 0; i < 75; ++i) s.push_back("tok" + std::to_string(i % 9));
  d.sentences.push_back(s);
  c.docs.push_back(d);
  DualVocab v = tiny_vocab(c);

  auto seqs = make_sequences(s, v, 30, 0, 0);
  REQUIRE(seqs.size() == 3);  // 76 transitions over (bos + 75 + eos)
  std::vector<std::size_t> inputs, targets;
  for (const auto& b : seqs) {
    CHECK(b.length() <= 30);
    for (std::size_t i = 0; i < b.length(); ++i) {
      CHECK(b.targets[i] != DualVocab::kBos);
      inputs.push_back(b.inputs[i]);
      targets.push_back(b.targets[i]);
    }
  }
  CHECK(inputs.front() == DualVocab::kBos);
  CHECK(targets.back() == DualVocab::kEos);
  REQUIRE(inputs.size() == s.size() + 1);
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(inputs[i + 1] == v.nlm_id(s[i]));
    CHECK(targets[i] == v.nlm_id(s[i]));
  }
  // targets are inputs shifted by exactly one
  for (std::size_t i = 0; i + 1 < inputs.size(); ++i) CHECK(targets[i] == inputs[i + 1]);
}

TEST_CASE("embedding loading") {
  RawCorpus c;
  Document d;
  d.sentences.push_back({"apple", "banana", "cherry", "apple"});
  c.docs.push_back(d);
  DualVocab v = tiny_vocab(c);

  auto e = load_embeddings<double>(kFixtures + "/embeddings_tiny.txt", 3, v, 42);
  REQUIRE(e.rows() == 3);
  REQUIRE(e.cols() == v.ntm_size());
  CHECK(e.at(0, v.ntm_id("apple")) == doctest::Approx(0.1));
  CHECK(e.at(2, v.ntm_id("banana")) == doctest::Approx(0.5));
  CHECK(e.at(1, v.ntm_id("cherry")) == doctest::Approx(-0.9));

  SUBCASE("reread oracle: columns equal file rows") {
    EmbeddingFile raw = read_embedding_file(kFixtures + "/embeddings_tiny.txt");
    for (const auto& word : {"apple", "banana", "cherry"})
      for (std::size_t i = 0; i < 3; ++i)
        CHECK(e.at(i, v.ntm_id(word)) == doctest::Approx(raw.vectors[word][i]));
  }

  SUBCASE("missing words get seed-stable random columns") {
    RawCorpus c2 = c;
    c2.docs[0].sentences[0].push_back("durian");
    DualVocab v2 = tiny_vocab(c2);
    auto e1 = load_embeddings<double>(kFixtures + "/embeddings_tiny.txt", 3, v2, 7);
    auto e2 = load_embeddings<double>(kFixtures + "/embeddings_tiny.txt", 3, v2, 7);
    auto e3 = load_embeddings<double>(kFixtures + "/embeddings_tiny.txt", 3, v2, 8);
    const std::size_t j = v2.ntm_id("durian");
    bool differs = false;
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(e1.at(i, j) == e2.at(i, j));
      CHECK(std::abs(e1.at(i, j)) <= 0.1);
      differs = differs || e1.at(i, j) != e3.at(i, j);
    }
    CHECK(differs);
  }

  SUBCASE("dimension mismatch is rejected") {
    CHECK_THROWS_AS(load_embeddings<double>(kFixtures + "/embeddings_tiny.txt", 5, v, 42),
                    ParseError);
    const std::string path = "/tmp/nclm_bad_emb.txt";
    {
      std::ofstream out(path);
      out << "1 3\n";
      out << "apple 0.1 0.2\n";
    }
    CHECK_THROWS_AS(read_embedding_file(path), ParseError);
    std::remove(path.c_str());
  }
}
