// Acceptance suite: one checkable criterion per function, each printing a
// single [PASS]/[FAIL] line. Run everything or a single criterion with
// --criterion N. Exit code is the number of failures.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "nclm/nclm.hpp"
#include "oracles.hpp"

using namespace nclm;
using TensorD = nclm::Tensor<double>;
using Idx = Tape<double>::Index;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  std::function<Outcome()> run;
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::size_t randint(Rng& rng, std::size_t lo, std::size_t hi) {  // inclusive
  return lo + static_cast<std::size_t>(rng.uniform() * static_cast<double>(hi - lo + 1));
}

TensorD random_bow(Rng& rng, std::size_t z, double density = 0.6) {
  TensorD v = TensorD::zeros({z});
  for (auto& x : v.data)
    if (rng.uniform() < density) x = std::floor(rng.uniform() * 3.0) + 1.0;
  return v;
}

NtmParams<double> random_ntm(Rng& rng, std::size_t z, std::size_t k, std::size_t hidden) {
  auto p = NtmParams<double>::init(z, k, hidden, rng);
  p.mlp_bias = uniform_sample<double>(rng, {hidden}, -0.1, 0.1);
  p.l1_bias = uniform_sample<double>(rng, {k}, -0.1, 0.1);
  p.l2_bias = uniform_sample<double>(rng, {k}, -0.1, 0.1);
  p.b = uniform_sample<double>(rng, {z}, -0.1, 0.1);
  return p;
}

NlmParams<double> random_nlm(Rng& rng, std::size_t v, std::size_t din, std::size_t h,
                             std::size_t layers, std::size_t ctx) {
  auto p = NlmParams<double>::init(v, din, h, layers, ctx, rng);
  p.a = uniform_sample<double>(rng, {v}, -0.1, 0.1);
  for (auto& layer : p.layers) layer.b = uniform_sample<double>(rng, {4 * h}, -0.1, 0.1);
  if (ctx > 0) p.proj_bias = uniform_sample<double>(rng, {h}, -0.1, 0.1);
  return p;
}

// ---------------------------------------------------------------- C1

Outcome criterion_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1001);
  Outcome out;
  int checked = 0;

  auto check_tensor = [&](const TensorD& analytic, TensorD& param, auto&& loss,
                          const std::string& label) {
    if (!out.pass) return;
    auto fd = oracle::fd_grad(param, loss);
    if (!oracle::grads_close(analytic, fd)) {
      out.pass = false;
      out.detail = "gradient mismatch at " + label;
    }
  };

  // ntm_loss, 20 instances, eps frozen via override
  for (int i = 0; i < 20 && out.pass; ++i) {
    const std::size_t z = randint(rng, 5, 12), k = randint(rng, 2, 4),
                      hidden = randint(rng, 4, 8);
    auto params = random_ntm(rng, z, k, hidden);
    TensorD bow_vec = random_bow(rng, z);
    TensorD eps = gaussian_sample<double>(rng, {k});

    Tape<double> tape;
    auto vars = stage_ntm(tape, params, true);
    auto bnode = tape.constant(bow_vec);
    auto post = sample_h_nodes(tape, vars, bnode, RunMode::train, nullptr, &eps);
    tape.backward(ntm_loss_node(tape, vars, bnode, post));
    auto loss = [&] { return ntm_loss(params, bow_vec, RunMode::train, nullptr, &eps); };
    auto named = params.named_params();
    auto nodes = named_nodes(vars);
    for (std::size_t p = 0; p < named.size() && out.pass; ++p)
      check_tensor(tape.grad(nodes[p].second), *named[p].second, loss,
                   "ntm_loss/" + named[p].first);
    ++checked;
  }

  // nlm_loss, six variants, 20 instances each, contexts included
  const std::vector<VariantConfig> variants{{Variant::lta, false}, {Variant::eta, false},
                                            {Variant::leta, false}, {Variant::lta, true},
                                            {Variant::eta, true},  {Variant::leta, true}};
  for (const auto& variant : variants) {
    for (int i = 0; i < 20 && out.pass; ++i) {
      const std::size_t v = randint(rng, 8, 16), h = randint(rng, 4, 10),
                        din = randint(rng, 3, 6), layers = randint(rng, 1, 2),
                        k = randint(rng, 2, 4), de = randint(rng, 3, 6),
                        m = randint(rng, 2, 6);
      auto params = random_nlm(rng, v, din, h, layers, variant.context_dim(k, de));
      SequenceBatch batch;
      for (std::size_t p = 0; p < m; ++p) {
        batch.inputs.push_back(randint(rng, 0, v - 1));
        batch.targets.push_back(randint(rng, 0, v - 1));
      }
      TensorD doc_ltr = uniform_sample<double>(rng, {k}, -1, 1);
      TensorD doc_etr = uniform_sample<double>(rng, {de}, -1, 1);
      std::vector<TensorD> sent_ltr, sent_etr;
      for (std::size_t p = 0; p < m; ++p) {
        sent_ltr.push_back(uniform_sample<double>(rng, {k}, -1, 1));
        sent_etr.push_back(uniform_sample<double>(rng, {de}, -1, 1));
      }

      auto loss = [&] {
        return nlm_loss(params, variant, batch, &doc_ltr, &doc_etr, &sent_ltr, &sent_etr);
      };

      Tape<double> tape;
      auto vars = stage_nlm(tape, params, true);
      ContextNodes<double> doc{tape.leaf(doc_ltr), tape.leaf(doc_etr)};
      std::vector<ContextNodes<double>> sctx;
      for (std::size_t p = 0; p < m; ++p)
        sctx.push_back({tape.leaf(sent_ltr[p]), tape.leaf(sent_etr[p])});
      auto node = nlm_loss_node<double>(tape, vars, variant, batch, doc,
                                        [&](std::size_t p) { return sctx[p]; });
      tape.backward(node);

      auto named = params.named_params();
      auto nodes = named_nodes(vars);
      for (std::size_t p = 0; p < named.size() && out.pass; ++p)
        check_tensor(tape.grad(nodes[p].second), *named[p].second, loss,
                     variant.name() + "/" + named[p].first);
      check_tensor(tape.grad(doc.ltr), doc_ltr, loss, variant.name() + "/doc_ltr");
      check_tensor(tape.grad(doc.etr), doc_etr, loss, variant.name() + "/doc_etr");
      if (variant.sdt) {
        check_tensor(tape.grad(sctx[0].ltr), sent_ltr[0], loss, variant.name() + "/sent_ltr");
        check_tensor(tape.grad(sctx[m - 1].etr), sent_etr[m - 1], loss,
                     variant.name() + "/sent_etr");
      }
      ++checked;
    }
  }

  // joint loss, 20 instances cycling the variants; eps and terms frozen
  for (int i = 0; i < 20 && out.pass; ++i) {
    const VariantConfig variant = variants[static_cast<std::size_t>(i) % variants.size()];
    const std::size_t z = randint(rng, 6, 12), k = randint(rng, 2, 4),
                      hidden = randint(rng, 4, 6), v = randint(rng, 8, 14),
                      h = randint(rng, 4, 8), din = randint(rng, 3, 5),
                      de = randint(rng, 3, 5), m = randint(rng, 2, 5);
    const double alpha = rng.uniform(0.05, 0.95);
    auto ntm = random_ntm(rng, z, k, hidden);
    auto nlm = random_nlm(rng, v, din, h, 1, variant.context_dim(k, de));
    TensorD emb = uniform_sample<double>(rng, {de, z}, -0.5, 0.5);
    TensorD loss_bow = random_bow(rng, z);
    TensorD eps_doc = gaussian_sample<double>(rng, {k});
    SequenceBatch batch;
    for (std::size_t p = 0; p < m; ++p) {
      batch.inputs.push_back(randint(rng, 0, v - 1));
      batch.targets.push_back(randint(rng, 0, v - 1));
    }
    std::vector<TensorD> sbows, seps;
    for (std::size_t p = 0; p < m; ++p) {
      sbows.push_back(random_bow(rng, z));
      seps.push_back(gaussian_sample<double>(rng, {k}));
    }
    const std::size_t topn = randint(rng, 1, 4);
    // terms frozen from the unperturbed decoder
    TopicTerms doc_terms = topic_extract(ntm.W, loss_bow, topn);
    std::vector<TopicTerms> sent_terms;
    for (std::size_t p = 0; p < m; ++p) sent_terms.push_back(topic_extract(ntm.W, sbows[p], topn));

    auto build = [&](Tape<double>& tape, bool trainable) {
      auto nv = stage_ntm(tape, ntm, trainable);
      auto lv = stage_nlm(tape, nlm, trainable);
      auto ev = tape.constant(emb);
      auto bnode = tape.constant(loss_bow);
      auto post = sample_h_nodes(tape, nv, bnode, RunMode::train, nullptr, &eps_doc);
      auto ntm_l = ntm_loss_node(tape, nv, bnode, post);
      ContextNodes<double> doc;
      if (variant.uses_ltr()) doc.ltr = post.h;
      if (variant.uses_etr()) doc.etr = etr_node(tape, post.h, ev, doc_terms, false, topn);
      std::vector<ContextNodes<double>> sctx;
      for (std::size_t p = 0; p < m; ++p) {
        auto spost =
            sample_h_nodes(tape, nv, tape.constant(sbows[p]), RunMode::train, nullptr, &seps[p]);
        ContextNodes<double> c;
        if (variant.uses_ltr()) c.ltr = spost.h;
        if (variant.uses_etr()) c.etr = etr_node(tape, spost.h, ev, sent_terms[p], false, topn);
        sctx.push_back(c);
      }
      auto nlm_l = nlm_loss_node<double>(tape, lv, variant, batch, doc,
                                         [&, sctx](std::size_t p) { return sctx[p]; });
      struct R {
        NtmVars<double> nv;
        NlmVars<double> lv;
        Idx loss;
      };
      return R{nv, lv,
               tape.add(tape.scale(ntm_l, alpha), tape.scale(nlm_l, 1.0 - alpha))};
    };

    Tape<double> tape;
    auto built = build(tape, true);
    tape.backward(built.loss);
    auto loss = [&] {
      Tape<double> t2;
      return t2.value(build(t2, false).loss).item();
    };
    auto ntm_named = ntm.named_params();
    auto ntm_nodes = named_nodes(built.nv);
    for (std::size_t p = 0; p < ntm_named.size() && out.pass; ++p)
      check_tensor(tape.grad(ntm_nodes[p].second), *ntm_named[p].second, loss,
                   "joint/" + ntm_named[p].first);
    auto nlm_named = nlm.named_params();
    auto nlm_nodes = named_nodes(built.lv);
    for (std::size_t p = 0; p < nlm_named.size() && out.pass; ++p)
      check_tensor(tape.grad(nlm_nodes[p].second), *nlm_named[p].second, loss,
                   "joint/" + nlm_named[p].first);
    ++checked;
  }

  std::ostringstream os;
  os << checked << " instances, rel-err < 1e-4, " << elapsed_s(t0) << "s";
  if (out.pass) out.detail = os.str();
  return out;
}

// ---------------------------------------------------------------- C2

Outcome criterion_topic_extract_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(2002);
  for (int i = 0; i < 100; ++i) {
    const std::size_t k = randint(rng, 1, 5), z = randint(rng, 3, 20),
                      topn = randint(rng, 1, 8);
    auto w = uniform_sample<double>(rng, {k, z}, -1, 1);
    TensorD v = TensorD::zeros({z});
    std::vector<double> vv(z, 0.0);
    for (std::size_t j = 0; j < z; ++j) {
      v[j] = rng.uniform() < 0.5 ? 0.0 : std::floor(rng.uniform() * 4.0) + 1.0;
      vv[j] = v[j];
    }
    if (topic_extract(w, v, topn) != oracle::topic_extract_ref(w, vv, topn))
      return {false, "mismatch on instance " + std::to_string(i)};
  }
  return {true, "100 instances exact (indices and order), " +
                    std::to_string(elapsed_s(t0)) + "s"};
}

// ---------------------------------------------------------------- C3

Outcome criterion_kld() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(3003);
  for (int i = 0; i < 10000; ++i) {
    const std::size_t k = randint(rng, 1, 4);
    auto mu = uniform_sample<double>(rng, {k}, -3, 3);
    auto sigma = uniform_sample<double>(rng, {k}, 0.05, 3.0);
    if (kl_divergence(mu, sigma) < 0.0)
      return {false, "negative KLD on instance " + std::to_string(i)};
  }
  const double at_prior = kl_divergence(TensorD::vector({0, 0, 0}), TensorD::vector({1, 1, 1}));
  if (std::abs(at_prior) > 1e-12) return {false, "KLD(0,1) != 0"};

  for (int i = 0; i < 10; ++i) {
    const std::size_t k = randint(rng, 1, 4);
    TensorD mu = TensorD::zeros({k});
    for (auto& m : mu.data) m = (rng.uniform() < 0.5 ? -1 : 1) * rng.uniform(0.7, 1.5);
    auto sigma = uniform_sample<double>(rng, {k}, 0.5, 1.5);
    const double closed = kl_divergence(mu, sigma);
    double mc = 0;
    const int n = 1000000;
    for (int s = 0; s < n; ++s)
      for (std::size_t d = 0; d < k; ++d) {
        const double e = rng.normal();
        const double x = mu[d] + sigma[d] * e;
        mc += (-std::log(sigma[d]) - 0.5 * e * e) + 0.5 * x * x;
      }
    mc /= n;
    if (std::abs(mc - closed) > 0.01 * closed)
      return {false, "MC estimate off by " + std::to_string(std::abs(mc - closed) / closed)};
  }
  return {true, "10^4 non-negativity + 10 MC instances within 1%, " +
                    std::to_string(elapsed_s(t0)) + "s"};
}

// ---------------------------------------------------------------- C4

RawCorpus random_text_corpus(Rng& rng, std::size_t docs, std::size_t max_sents,
                             std::size_t max_len, std::size_t types) {
  RawCorpus c;
  for (std::size_t d = 0; d < docs; ++d) {
    Document doc;
    const std::size_t ns = 1 + randint(rng, 0, max_sents - 1);
    for (std::size_t s = 0; s < ns; ++s) {
      Sentence sent;
      const std::size_t len = 1 + randint(rng, 0, max_len - 1);
      for (std::size_t i = 0; i < len; ++i)
        sent.push_back("w" + std::to_string(randint(rng, 0, types - 1)));
      doc.sentences.push_back(std::move(sent));
    }
    c.docs.push_back(std::move(doc));
  }
  return c;
}

Outcome criterion_leakage() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(4004);
  RawCorpus corpus = random_text_corpus(rng, 50, 6, 12, 60);
  VocabOptions opt;
  opt.nlm_min_count = 1;
  opt.ntm_min_count = 2;
  opt.top_frac = 0.02;
  DualVocab vocab = build_vocabs(corpus, opt, {});

  std::size_t pairs = 0, positions = 0;
  for (const auto& doc : corpus.docs) {
    auto whole = bow<double>(full_view(doc), vocab);
    for (std::size_t s = 0; s < doc.sentences.size(); ++s) {
      auto rest = bow<double>(doc_minus_sentence(doc, s), vocab);
      auto sent = bow<double>(sentence_view(doc.sentences[s]), vocab);
      for (std::size_t i = 0; i < whole.size(); ++i)
        if (rest[i] + sent[i] != whole[i])
          return {false, "bow(d-s) + bow(s) != bow(d)"};
      ++pairs;
      for (const auto& y : doc.sentences[s]) {
        const std::size_t id = vocab.ntm_id(y);
        if (id == DualVocab::npos) continue;
        auto sy = bow<double>(sentence_minus_word(doc.sentences[s], y), vocab);
        if (sy[id] != 0.0) return {false, "bow(s-y) leaked target type " + y};
        ++positions;
      }
    }
  }
  std::ostringstream os;
  os << pairs << " (d,s) pairs, " << positions << " target positions, exhaustive, "
     << elapsed_s(t0) << "s";
  return {true, os.str()};
}

// ---------------------------------------------------------------- C5 helpers

std::vector<std::string> planted_set(char prefix, std::size_t n) {
  std::vector<std::string> words;
  for (std::size_t i = 0; i < n; ++i) words.push_back(std::string(1, prefix) + std::to_string(i));
  return words;
}

RawCorpus planted_corpus(Rng& rng, std::size_t docs, std::size_t sents, std::size_t len) {
  auto a = planted_set('a', 20), b = planted_set('b', 20);
  RawCorpus c;
  for (std::size_t d = 0; d < docs; ++d) {
    const auto& set = d % 2 == 0 ? a : b;
    Document doc;
    for (std::size_t s = 0; s < sents; ++s) {
      Sentence sent;
      for (std::size_t i = 0; i < len; ++i) sent.push_back(set[randint(rng, 0, set.size() - 1)]);
      sent.push_back(".");
      doc.sentences.push_back(std::move(sent));
    }
    c.docs.push_back(std::move(doc));
  }
  return c;
}

std::size_t count_in_set(const std::vector<std::string>& words,
                         const std::vector<std::string>& set) {
  std::size_t n = 0;
  for (const auto& w : words)
    if (std::find(set.begin(), set.end(), w) != set.end()) ++n;
  return n;
}

TrainConfig planted_cfg() {
  TrainConfig cfg;
  cfg.alpha = 0.5;
  cfg.topN = 5;
  cfg.K = 2;
  cfg.variant = "eta";
  cfg.sdt = false;
  cfg.lr = 0.01;
  cfg.batch_size = 25;
  cfg.max_seq_len = 12;
  cfg.ntm_pretrain_epochs = 30;
  cfg.nlm_pretrain_epochs = 0;
  cfg.max_epochs = 0;
  cfg.seed = 9;
  cfg.ntm_hidden = 16;
  cfg.lstm_hidden = 8;
  cfg.lstm_layers = 1;
  cfg.embed_dim = 6;
  cfg.topic_embed_dim = 6;
  cfg.dropout = 0.0;
  cfg.nlm_min_count = 1;
  cfg.ntm_min_count = 1;
  cfg.top_frac = 0.0;
  return cfg;
}

Outcome criterion_planted_recovery() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(5005);
  RawCorpus train_c = planted_corpus(rng, 500, 3, 8);
  RawCorpus valid_c = planted_corpus(rng, 40, 3, 8);
  TrainConfig cfg = planted_cfg();

  auto result = train<double>(cfg, train_c, valid_c);
  auto report = topic_report(result.model.ntm, result.model.vocab, 5);
  auto a = planted_set('a', 20), b = planted_set('b', 20);

  std::vector<int> assignment;  // 0 -> set a, 1 -> set b, -1 -> neither
  for (const auto& words : report) {
    const std::size_t in_a = count_in_set(words, a), in_b = count_in_set(words, b);
    if (in_a >= 4 && in_a >= in_b)
      assignment.push_back(0);
    else if (in_b >= 4)
      assignment.push_back(1);
    else
      assignment.push_back(-1);
  }
  std::ostringstream os;
  os << "topics -> sets {" << assignment[0] << "," << assignment[1] << "}";
  if (assignment[0] == -1 || assignment[1] == -1)
    return {false, os.str() + ": a topic failed the >=4-of-5 planted-word bar"};
  if (assignment[0] == assignment[1])
    return {false, os.str() + ": both topics mapped to the same planted set"};

  const auto& hist = result.ntm_valid_ppl;
  const double best = *std::min_element(hist.begin() + 1, hist.end());
  if (!(best < hist.front()))
    return {false, "ntm perplexity did not improve: epoch0=" + std::to_string(hist.front()) +
                       " best=" + std::to_string(best)};
  os << ", ntm ppl " << hist.front() << " -> " << best << ", " << elapsed_s(t0) << "s";
  return {true, os.str()};
}

// ---------------------------------------------------------------- C6

RawCorpus topical_corpus(Rng& rng, std::size_t docs, std::size_t sents) {
  // two topics govern the content-word distribution inside each document;
  // the function-word skeleton is shared
  std::vector<std::string> content_a, content_b;
  for (int i = 0; i < 15; ++i) {
    content_a.push_back("ca" + std::to_string(i));
    content_b.push_back("cb" + std::to_string(i));
  }
  const std::vector<std::string> verbs{"makes", "sees", "takes", "finds"};
  RawCorpus c;
  for (std::size_t d = 0; d < docs; ++d) {
    const auto& content = d % 2 == 0 ? content_a : content_b;
    Document doc;
    for (std::size_t s = 0; s < sents; ++s) {
      Sentence sent{"the", content[randint(rng, 0, content.size() - 1)],
                    verbs[randint(rng, 0, verbs.size() - 1)], "the",
                    content[randint(rng, 0, content.size() - 1)], "."};
      doc.sentences.push_back(std::move(sent));
    }
    c.docs.push_back(std::move(doc));
  }
  return c;
}

TrainConfig topical_cfg(const std::string& variant, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.alpha = 0.05;
  cfg.topN = 5;
  cfg.K = 2;
  cfg.variant = variant;
  cfg.sdt = false;
  cfg.lr = 0.01;
  cfg.batch_size = 16;
  cfg.max_seq_len = 10;
  cfg.ntm_pretrain_epochs = 15;
  cfg.nlm_pretrain_epochs = 6;
  cfg.max_epochs = 60;
  cfg.early_stop_patience = 15;
  cfg.seed = seed;
  cfg.ntm_hidden = 16;
  cfg.lstm_hidden = 16;
  cfg.lstm_layers = 1;
  cfg.embed_dim = 8;
  cfg.topic_embed_dim = 4;
  cfg.dropout = 0.0;
  cfg.nlm_min_count = 1;
  cfg.ntm_min_count = 1;
  cfg.top_frac = 0.0;
  return cfg;
}

/// Word vectors with the two content clusters on separated axes, standing in
/// for pretrained embeddings at desk scale.
EmbeddingFile topical_embeddings(std::size_t dim) {
  EmbeddingFile file;
  file.dim = dim;
  Rng rng(88);
  auto add = [&](const std::string& word, std::size_t axis) {
    std::vector<double> vec(dim);
    for (auto& v : vec) v = rng.uniform(-0.05, 0.05);
    if (axis < dim) vec[axis] += 1.0;
    file.vectors[word] = vec;
  };
  for (int i = 0; i < 15; ++i) {
    add("ca" + std::to_string(i), 0);
    add("cb" + std::to_string(i), 1);
  }
  for (const std::string w : {"the", "makes", "sees", "takes", "finds", "."}) add(w, 3);
  return file;
}

Outcome criterion_composition_benefit() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(6006);
  RawCorpus train_c = topical_corpus(rng, 200, 5);
  RawCorpus valid_c = topical_corpus(rng, 30, 5);
  RawCorpus test_c = topical_corpus(rng, 60, 5);
  EmbeddingFile emb = topical_embeddings(4);

  auto median_test_ppl = [&](const std::string& variant) {
    std::vector<double> ppls;
    for (std::uint64_t seed : {11ULL, 22ULL, 33ULL}) {
      auto result = train<double>(topical_cfg(variant, seed), train_c, valid_c, &emb);
      ppls.push_back(lm_perplexity(result.model, test_c));
    }
    std::sort(ppls.begin(), ppls.end());
    return ppls[1];
  };

  const double lstm = median_test_ppl("lstm");
  const double lta = median_test_ppl("lta");
  const double leta = median_test_ppl("leta");
  std::ostringstream os;
  os << "median test ppl: lstm=" << lstm << " lta=" << lta << " leta=" << leta << ", "
     << elapsed_s(t0) << "s";
  if (!(lta <= lstm)) return {false, os.str() + " (lta > lstm)"};
  if (!(leta <= lta)) return {false, os.str() + " (leta > lta)"};
  return {true, os.str()};
}

// ---------------------------------------------------------------- C7

Outcome criterion_joint_algebra() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(7007);
  RawCorpus corpus = random_text_corpus(rng, 6, 3, 6, 10);
  TrainConfig cfg = topical_cfg("leta", 3);
  cfg.topN = 3;
  auto model = build_model<double>(cfg, corpus, nullptr, {});
  auto units = build_units<double>(corpus, model.vocab, cfg);

  auto losses_at = [&](double alpha, TensorD* gw, TensorD* gb) {
    Rng r(99);
    Tape<double> tape;
    auto staged = stage_model(tape, model, true, true, false);
    auto nodes = sentence_loss_nodes(tape, staged, model, units[0], RunMode::train,
                                     RunMode::train, &r);
    auto joint = joint_loss_node(tape, nodes, alpha);
    tape.backward(joint);
    if (gw) *gw = tape.grad(staged.ntm.W);
    if (gb) *gb = tape.grad(staged.ntm.b);
    struct V {
      double joint, ntm, nlm;
    };
    return V{tape.value(joint).item(), tape.value(nodes.ntm_loss).item(),
             tape.value(nodes.nlm_loss).item()};
  };

  auto v0 = losses_at(0.0, nullptr, nullptr);
  if (std::abs(v0.joint - v0.nlm) > 1e-12) return {false, "alpha=0 joint != nlm loss"};
  auto v1 = losses_at(1.0, nullptr, nullptr);
  if (std::abs(v1.joint - v1.ntm) > 1e-12) return {false, "alpha=1 joint != ntm loss"};

  TensorD w1, b1, w2, b2;
  losses_at(0.25, &w1, &b1);
  losses_at(0.75, &w2, &b2);
  for (std::size_t i = 0; i < w1.size(); ++i)
    if (!oracle::grad_close(w1[i] / 0.25, w2[i] / 0.75, 1e-9, 1e-12))
      return {false, "decoder W gradient does not scale linearly in alpha"};
  for (std::size_t i = 0; i < b1.size(); ++i)
    if (!oracle::grad_close(b1[i] / 0.25, b2[i] / 0.75, 1e-9, 1e-12))
      return {false, "decoder b gradient does not scale linearly in alpha"};
  return {true, "alpha algebra exact, decoder gradients scale linearly, " +
                    std::to_string(elapsed_s(t0)) + "s"};
}

// ---------------------------------------------------------------- C8

Outcome criterion_coherence_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  auto doc = [](std::initializer_list<const char*> words) {
    Document d;
    Sentence s;
    for (const char* w : words) s.push_back(w);
    d.sentences.push_back(std::move(s));
    return d;
  };
  RawCorpus ref;
  ref.docs = {doc({"sun", "moon", "star"}), doc({"sun", "moon"}), doc({"sun", "rain"}),
              doc({"rain", "wind"}), doc({"star", "wind", "sun"})};

  CoherenceConfig cfg;
  cfg.top_counts = {2, 3};
  const double eps = cfg.eps;
  auto npmi = [&](double pi, double pj, double pij) {
    return std::log((pij + eps) / (pi * pj)) / -std::log(pij + eps);
  };
  // hand counts: p(sun)=4/5, p(moon)=p(star)=2/5; joints 2/5, 2/5, 1/5
  const double expected =
      (npmi(0.8, 0.4, 0.4) + (npmi(0.8, 0.4, 0.4) + npmi(0.8, 0.4, 0.4) + npmi(0.4, 0.4, 0.2)) / 3.0) /
      2.0;
  auto result = npmi_coherence({{"sun", "moon", "star"}}, ref, cfg);
  if (std::abs(result.average - expected) > 1e-9)
    return {false, "hand-computed mismatch: got " + std::to_string(result.average) +
                       " want " + std::to_string(expected)};

  const double always = npmi_pair(0.4, 0.4, 0.4, eps);
  const double never = npmi_pair(0.4, 0.4, 0.0, eps);
  if (!(always > never)) return {false, "always-co-occurring pair did not outscore never pair"};
  return {true, "fixture matches hand NPMI within 1e-9; ordering holds, " +
                    std::to_string(elapsed_s(t0)) + "s"};
}

// ---------------------------------------------------------------- C9

Outcome criterion_retrieval_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(9009);
  FeatureTable train_f, test_f;
  const std::vector<std::string> classes{"a", "b", "c"};
  for (int i = 0; i < 20; ++i) {
    train_f.doc_ids.push_back("t" + std::to_string(i));
    train_f.labels.push_back(classes[randint(rng, 0, 2)]);
    std::vector<double> row(6);
    for (auto& v : row) v = rng.uniform(-1, 1);
    train_f.rows.push_back(row);
    test_f.doc_ids.push_back("q" + std::to_string(i));
    test_f.labels.push_back(classes[randint(rng, 0, 2)]);
    for (auto& v : row) v = rng.uniform(-1, 1);
    test_f.rows.push_back(row);
  }
  auto got = retrieval_eval(train_f, test_f, {5, 10});
  for (std::size_t k : {std::size_t(5), std::size_t(10)}) {
    for (std::size_t q = 0; q < test_f.rows.size(); ++q) {
      std::vector<bool> used(train_f.rows.size(), false);
      std::size_t hits = 0;
      for (std::size_t r = 0; r < k; ++r) {
        double best = -2;
        std::size_t best_i = 0;
        for (std::size_t i = 0; i < train_f.rows.size(); ++i) {
          if (used[i]) continue;
          const double s = cosine_similarity(test_f.rows[q], train_f.rows[i]);
          if (s > best) {
            best = s;
            best_i = i;
          }
        }
        used[best_i] = true;
        if (train_f.labels[best_i] == test_f.labels[q]) ++hits;
      }
      if (got.per_query[k][q] != static_cast<double>(hits) / static_cast<double>(k))
        return {false, "oracle mismatch at query " + std::to_string(q)};
    }
  }

  FeatureTable tr1, te1;
  tr1.doc_ids = {"0", "1"};
  tr1.labels = {"x", "y"};
  tr1.rows = {{1, 0}, {0, 1}};
  te1 = tr1;
  if (retrieval_eval(tr1, te1, {1}).p_at_k[1] != 1.0)
    return {false, "one-hot construction did not give p@1 = 1"};
  return {true, "20x20 exhaustive oracle exact; one-hot p@1 = 1, " +
                    std::to_string(elapsed_s(t0)) + "s"};
}

// ---------------------------------------------------------------- C10

Outcome criterion_determinism_persistence() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1010);
  RawCorpus train_c = random_text_corpus(rng, 20, 4, 8, 25);
  RawCorpus valid_c = random_text_corpus(rng, 5, 3, 8, 25);
  TrainConfig cfg = topical_cfg("leta", 77);
  cfg.sdt = true;
  cfg.ntm_pretrain_epochs = 2;
  cfg.nlm_pretrain_epochs = 1;
  cfg.max_epochs = 2;

  auto result = train<double>(cfg, train_c, valid_c);
  const double direct = lm_perplexity(result.model, valid_c);

  const std::string p1 = "/tmp/nclm_acc10_a.ckpt", p2 = "/tmp/nclm_acc10_b.ckpt";
  auto state = result.to_checkpoint(cfg);
  save_checkpoint(p1, state);
  auto loaded = load_checkpoint<double>(p1);
  const double reloaded = lm_perplexity(loaded.model, valid_c);
  save_checkpoint(p2, loaded);

  auto slurp = [](const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  };
  const bool bytes_equal = slurp(p1) == slurp(p2);
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  if (direct != reloaded)
    return {false, "perplexity changed across save/load: " + std::to_string(direct) + " vs " +
                       std::to_string(reloaded)};
  if (!bytes_equal) return {false, "checkpoint round-trip is not byte-identical"};

  auto result2 = train<double>(cfg, train_c, valid_c);
  if (lm_perplexity(result2.model, valid_c) != direct)
    return {false, "training is not deterministic under the fixed seed"};
  std::ostringstream os;
  os << "ppl " << direct << " bit-identical across save/load and re-train, " << elapsed_s(t0)
     << "s";
  return {true, os.str()};
}

// ---------------------------------------------------------------- C11

Outcome criterion_sdt_scaling() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::size_t> sizes{8, 16, 32};
  auto sdt = context_scaling_bench<double>(sizes, VariantConfig{Variant::leta, true}, 2000, 8, 50,
                                           20, 30, 1);
  auto base = context_scaling_bench<double>(sizes, VariantConfig{Variant::leta, false}, 2000, 8,
                                            50, 20, 30, 1);
  const double sdt_ratio = sdt.back().context_ms / sdt.front().context_ms;
  const double base_ratio = base.back().context_ms / base.front().context_ms;
  std::ostringstream os;
  os << "sdt ratio M=32/M=8: " << sdt_ratio << " (want [2.5, 6]), non-sdt ratio: " << base_ratio
     << " (want < 2), " << elapsed_s(t0) << "s";
  if (sdt_ratio < 2.5 || sdt_ratio > 6.0) return {false, os.str()};
  if (!(base_ratio < 2.0)) return {false, os.str()};
  return {true, os.str()};
}

// ---------------------------------------------------------------- C12

/// Pretrained-style topic embeddings: the two planted sets sit on separated
/// axes, the way real word vectors separate topical clusters.
EmbeddingFile planted_embeddings(std::size_t dim) {
  EmbeddingFile file;
  file.dim = dim;
  Rng rng(77);
  auto add = [&](const std::vector<std::string>& words, std::size_t axis) {
    for (const auto& w : words) {
      std::vector<double> vec(dim);
      for (auto& v : vec) v = rng.uniform(-0.05, 0.05);
      vec[axis] += 1.0;
      file.vectors[w] = vec;
    }
  };
  add(planted_set('a', 20), 0);
  add(planted_set('b', 20), 1);
  return file;
}

Outcome criterion_generation_steering() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(1212);
  RawCorpus train_c = planted_corpus(rng, 200, 3, 6);
  RawCorpus valid_c = planted_corpus(rng, 20, 3, 6);
  TrainConfig cfg = planted_cfg();
  cfg.variant = "eta";
  cfg.ntm_pretrain_epochs = 20;
  cfg.nlm_pretrain_epochs = 4;
  cfg.max_epochs = 6;
  cfg.early_stop_patience = 3;
  cfg.lstm_hidden = 16;
  cfg.embed_dim = 8;
  cfg.topic_embed_dim = 4;

  EmbeddingFile emb = planted_embeddings(cfg.topic_embed_dim);
  auto result = train<double>(cfg, train_c, valid_c, &emb);
  Model<double>& model = result.model;

  // map learned topic 0 to whichever planted set it recovered
  auto report = topic_report(model.ntm, model.vocab, 5);
  auto a = planted_set('a', 20), b = planted_set('b', 20);
  const auto& set0 = count_in_set(report[0], a) >= count_in_set(report[0], b) ? a : b;

  auto planted_fraction = [&](std::size_t topic) {
    GenerateOptions opt;
    opt.topic = topic;
    opt.max_len = 8;
    opt.topn = cfg.topN;
    std::size_t in_set = 0, total = 0;
    Rng grng(5);
    for (int s = 0; s < 20; ++s) {
      auto words = generate(model.nlm, model.ntm, model.topic_emb, model.vocab, model.variant(),
                            opt, grng);
      total += words.size();
      in_set += count_in_set(words, set0);
    }
    return total == 0 ? 0.0 : static_cast<double>(in_set) / static_cast<double>(total);
  };

  const double f0 = planted_fraction(0), f1 = planted_fraction(1);
  std::ostringstream os;
  os << "planted-set-0 fraction: topic0=" << f0 << " topic1=" << f1 << ", 20 sentences each, "
     << elapsed_s(t0) << "s";
  if (!(f0 > f1)) return {false, os.str()};
  return {true, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<Criterion> criteria{
      {1, "gradient suite (ntm, six nlm variants, joint; FD rel-err < 1e-4)",
       criterion_gradients},
      {2, "topic_extract equals brute-force filter-sort oracle", criterion_topic_extract_oracle},
      {3, "KLD non-negativity, zero at prior, Monte-Carlo within 1%", criterion_kld},
      {4, "leakage suite: bow(d-s)+bow(s)==bow(d), bow(s-y)[y]==0", criterion_leakage},
      {5, "planted-topic recovery (top-5 words, ppl improvement)", criterion_planted_recovery},
      {6, "composition benefit: leta <= lta <= lstm (median of 3 seeds)",
       criterion_composition_benefit},
      {7, "joint-loss algebra and decoder gradient scaling in alpha", criterion_joint_algebra},
      {8, "NPMI coherence hand-computed oracle", criterion_coherence_oracle},
      {9, "retrieval equals exhaustive cosine oracle", criterion_retrieval_oracle},
      {10, "determinism and checkpoint persistence", criterion_determinism_persistence},
      {11, "SDT context cost scales with sentence length (non-SDT flat)", criterion_sdt_scaling},
      {12, "generation steering toward the conditioned planted topic",
       criterion_generation_steering},
  };

  int only = -1;
  for (int i = 1; i < argc; ++i)
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) only = std::atoi(argv[i + 1]);

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != -1 && c.id != only) continue;
    Outcome r;
    try {
      r = c.run();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    std::cout << (r.pass ? "[PASS]" : "[FAIL]") << " C" << c.id << " " << c.name << " — "
              << r.detail << "\n";
    if (!r.pass) ++failures;
  }
  return failures;
}
