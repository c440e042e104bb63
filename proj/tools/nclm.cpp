// nclm: train, evaluate, and probe composite topic + language models from
// the command line. One subcommand per invocation; results go to stdout or
// --out, structured logs to stderr.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nclm/nclm.hpp"

namespace {

struct CliOptions {
  std::string config_path, corpus, valid, test, embeddings, stopwords, ckpt, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<bool> sdt;
  std::optional<double> alpha;
  std::optional<std::size_t> topn;
  std::optional<std::size_t> k;
  std::string precision = "f64";
  bool precision_set = false;

  std::string topic = "none";
  std::size_t max_len = 30;
  std::size_t num_sentences = 1;
  std::vector<std::size_t> sizes{8, 16, 32};
  std::size_t reps = 20;
  std::vector<std::size_t> ks{5, 10};
  std::string format = "csv";
  bool as_json = false;
};

nclm::TrainConfig effective_config(const CliOptions& opt) {
  nclm::TrainConfig cfg =
      opt.config_path.empty() ? nclm::TrainConfig{} : nclm::load_config(opt.config_path);
  if (opt.seed) cfg.seed = *opt.seed;
  if (opt.variant) cfg.variant = *opt.variant;
  if (opt.sdt) cfg.sdt = *opt.sdt;
  if (opt.alpha) cfg.alpha = *opt.alpha;
  if (opt.topn) cfg.topN = *opt.topn;
  if (opt.k) cfg.K = *opt.k;
  if (opt.precision_set) cfg.precision = opt.precision;
  return nclm::validate_config(nclm::config_to_json(cfg));
}

void emit(const CliOptions& opt, const std::string& text) {
  if (opt.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
    return;
  }
  std::ofstream out(opt.out, std::ios::binary);
  if (!out) throw nclm::ParseError("cannot open output file: " + opt.out);
  out << text;
}

nclm::RawCorpus load(const std::string& path) {
  return nclm::load_corpus(path, nclm::corpus_format_for_path(path));
}

std::unordered_set<std::string> stopword_set(const CliOptions& opt) {
  if (opt.stopwords.empty()) return {};
  return nclm::load_stopwords(opt.stopwords);
}

/// Deterministic fallback split when --valid is not given: every tenth
/// document (at least one) becomes validation.
void split_valid(nclm::RawCorpus& train, nclm::RawCorpus& valid) {
  nclm::RawCorpus rest;
  for (std::size_t i = 0; i < train.docs.size(); ++i) {
    if (i % 10 == 9)
      valid.docs.push_back(train.docs[i]);
    else
      rest.docs.push_back(train.docs[i]);
  }
  if (valid.docs.empty() && rest.docs.size() > 1) {
    valid.docs.push_back(rest.docs.back());
    rest.docs.pop_back();
  }
  train = std::move(rest);
}

template <class T>
int cmd_prep(const CliOptions& opt) {
  nclm::TrainConfig cfg = effective_config(opt);
  nclm::RawCorpus corpus = load(opt.corpus);
  nclm::DualVocab vocab = nclm::build_vocabs(corpus, cfg.vocab_options(), stopword_set(opt));
  nlohmann::json report;
  report["documents"] = corpus.docs.size();
  report["sentences"] = corpus.sentence_count();
  report["tokens"] = corpus.token_count();
  report["nlm_vocab_size"] = vocab.nlm_size();
  report["ntm_vocab_size"] = vocab.ntm_size();
  emit(opt, report.dump(2));
  return 0;
}

template <class T>
int cmd_train(const CliOptions& opt) {
  nclm::TrainConfig cfg = effective_config(opt);
  nclm::RawCorpus train_c = load(opt.corpus);
  nclm::RawCorpus valid_c;
  if (!opt.valid.empty())
    valid_c = load(opt.valid);
  else
    split_valid(train_c, valid_c);

  std::optional<nclm::EmbeddingFile> emb;
  if (!opt.embeddings.empty()) emb = nclm::read_embedding_file(opt.embeddings);

  auto result = nclm::train<T>(cfg, train_c, valid_c, emb ? &*emb : nullptr, stopword_set(opt));
  if (opt.out.empty()) throw nclm::ConfigError("train: --out checkpoint path required");
  auto state = result.to_checkpoint(cfg);
  nclm::save_checkpoint(opt.out, state);

  nlohmann::json summary;
  summary["checkpoint"] = opt.out;
  summary["best_epoch"] = result.best_epoch;
  summary["best_valid_perplexity"] = result.best_valid_ppl;
  summary["ntm_valid_perplexity"] = result.ntm_valid_ppl;
  summary["joint_valid_perplexity"] = result.joint_valid_ppl;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

template <class T>
int cmd_sweep(const CliOptions& opt) {
  nclm::TrainConfig cfg = effective_config(opt);
  nclm::RawCorpus train_c = load(opt.corpus);
  nclm::RawCorpus valid_c;
  if (!opt.valid.empty())
    valid_c = load(opt.valid);
  else
    split_valid(train_c, valid_c);
  std::optional<nclm::EmbeddingFile> emb;
  if (!opt.embeddings.empty()) emb = nclm::read_embedding_file(opt.embeddings);

  auto report = nclm::sweep<T>(cfg, train_c, valid_c, emb ? &*emb : nullptr, stopword_set(opt));
  nlohmann::json j;
  for (const auto& row : report.rows)
    j["rows"].push_back({{"leg", row.leg},
                         {"alpha", row.alpha},
                         {"topN", row.topn},
                         {"valid_perplexity", row.valid_ppl}});
  j["best_alpha"] = report.best_alpha;
  j["best_topN"] = report.best_topn;
  emit(opt, j.dump(2));
  return 0;
}

template <class T>
int cmd_eval(const CliOptions& opt) {
  auto state = nclm::load_checkpoint<T>(opt.ckpt);
  if (opt.corpus.empty() && opt.test.empty())
    throw nclm::ConfigError("eval: --corpus (or --test) is required");
  nclm::RawCorpus test_c = load(opt.corpus.empty() ? opt.test : opt.corpus);
  nlohmann::json j;
  j["perplexity"] = nclm::lm_perplexity(state.model, test_c);
  emit(opt, j.dump(2));
  return 0;
}

template <class T>
int cmd_topics(const CliOptions& opt) {
  auto state = nclm::load_checkpoint<T>(opt.ckpt);
  const std::size_t topn = opt.topn.value_or(state.model.cfg.topN);
  auto report = nclm::topic_report(state.model.ntm, state.model.vocab, topn);
  if (opt.as_json) {
    nlohmann::json j;
    j["topics"] = report;
    emit(opt, j.dump(2));
    return 0;
  }
  std::ostringstream os;
  for (std::size_t k = 0; k < report.size(); ++k) {
    os << "topic " << k << ":";
    for (const auto& w : report[k]) os << " " << w;
    os << "\n";
  }
  emit(opt, os.str());
  return 0;
}

template <class T>
int cmd_coherence(const CliOptions& opt) {
  auto state = nclm::load_checkpoint<T>(opt.ckpt);
  nclm::RawCorpus reference = load(opt.corpus);
  const std::size_t topn = opt.topn.value_or(20);
  auto words = nclm::topic_report(state.model.ntm, state.model.vocab, topn);
  nclm::CoherenceConfig ccfg;
  auto result = nclm::npmi_coherence(words, reference, ccfg);
  nlohmann::json j;
  j["coherence"]["per_topic"] = result.per_topic;
  j["coherence"]["average"] = result.average;
  j["coherence"]["skipped_pairs"] = result.skipped_pairs;
  emit(opt, j.dump(2));
  return 0;
}

template <class T>
int cmd_generate(const CliOptions& opt) {
  auto state = nclm::load_checkpoint<T>(opt.ckpt);
  nclm::Model<T>& model = state.model;
  nclm::GenerateOptions gopt;
  gopt.max_len = opt.max_len;
  gopt.topn = opt.topn.value_or(model.cfg.topN);
  gopt.g = model.cfg.g();
  gopt.strict_topn = model.cfg.strict_topn_divisor;
  if (opt.topic != "none") gopt.topic = static_cast<std::size_t>(std::stoul(opt.topic));

  nclm::Rng rng(opt.seed.value_or(model.cfg.seed));
  std::ostringstream os;
  for (std::size_t i = 0; i < opt.num_sentences; ++i) {
    auto words = nclm::generate(model.nlm, model.ntm, model.topic_emb, model.vocab,
                                model.variant(), gopt, rng);
    for (std::size_t w = 0; w < words.size(); ++w) os << (w ? " " : "") << words[w];
    os << "\n";
  }
  emit(opt, os.str());
  return 0;
}

template <class T>
int cmd_features(const CliOptions& opt) {
  auto state = nclm::load_checkpoint<T>(opt.ckpt);
  nclm::RawCorpus docs = load(opt.corpus);
  auto table = nclm::export_features(state.model, docs);
  std::ostringstream os;
  if (opt.format == "jsonl")
    nclm::write_features_jsonl(table, os);
  else
    nclm::write_features_csv(table, os);
  emit(opt, os.str());
  return 0;
}

template <class T>
int cmd_retrieve(const CliOptions& opt) {
  auto state = nclm::load_checkpoint<T>(opt.ckpt);
  nclm::RawCorpus train_docs = load(opt.corpus);
  nclm::RawCorpus test_docs = load(opt.test);
  auto train_feats = nclm::export_features(state.model, train_docs);
  auto test_feats = nclm::export_features(state.model, test_docs);
  auto result = nclm::retrieval_eval(train_feats, test_feats, opt.ks);
  nlohmann::json j;
  for (auto& [k, p] : result.p_at_k) j["retrieval"]["p_at_k"][std::to_string(k)] = p;
  emit(opt, j.dump(2));
  return 0;
}

template <class T>
int cmd_bench(const CliOptions& opt) {
  nclm::TrainConfig cfg = effective_config(opt);
  nclm::VariantConfig variant = cfg.variant_config();
  const std::size_t z = 2000, de = 50;
  auto with_sdt = variant;
  auto base = variant;
  base.sdt = false;

  auto sdt_points = variant.sdt ? nclm::context_scaling_bench<T>(opt.sizes, with_sdt, z, cfg.K,
                                                                 de, cfg.topN, opt.reps, cfg.seed)
                                : std::vector<nclm::BenchPoint>{};
  auto base_points =
      nclm::context_scaling_bench<T>(opt.sizes, base, z, cfg.K, de, cfg.topN, opt.reps, cfg.seed);

  nlohmann::json j;
  j["variant"] = variant.name();
  for (std::size_t i = 0; i < opt.sizes.size(); ++i) {
    nlohmann::json row;
    row["sentence_len"] = opt.sizes[i];
    row["context_ms"] = base_points[i].context_ms;
    if (variant.sdt) row["sdt_context_ms"] = sdt_points[i].context_ms;
    j["points"].push_back(row);
  }
  if (opt.sizes.size() >= 2) {
    j["context_ratio_last_first"] =
        base_points.back().context_ms / base_points.front().context_ms;
    if (variant.sdt)
      j["sdt_context_ratio_last_first"] =
          sdt_points.back().context_ms / sdt_points.front().context_ms;
  }
  emit(opt, j.dump(2));
  return 0;
}

template <class T>
int dispatch(const std::string& cmd, const CliOptions& opt) {
  if (cmd == "prep") return cmd_prep<T>(opt);
  if (cmd == "train") return cmd_train<T>(opt);
  if (cmd == "sweep") return cmd_sweep<T>(opt);
  if (cmd == "eval") return cmd_eval<T>(opt);
  if (cmd == "topics") return cmd_topics<T>(opt);
  if (cmd == "coherence") return cmd_coherence<T>(opt);
  if (cmd == "generate") return cmd_generate<T>(opt);
  if (cmd == "features") return cmd_features<T>(opt);
  if (cmd == "retrieve") return cmd_retrieve<T>(opt);
  if (cmd == "bench") return cmd_bench<T>(opt);
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"neural composite topic + language model toolkit"};
  app.require_subcommand(1);
  CliOptions opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "JSON config file");
    sub->add_option("--seed", opt.seed, "override the config seed");
    sub->add_option("--precision", opt.precision, "numeric precision: f32|f64")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->each([&](const std::string&) { opt.precision_set = true; });
    sub->add_option("--out", opt.out, "write results to this path instead of stdout");
  };
  auto add_model_flags = [&](CLI::App* sub) {
    sub->add_option("--variant", opt.variant, "model variant: lstm|lta|eta|leta")
        ->check(CLI::IsMember({"lstm", "lta", "eta", "leta"}));
    sub->add_flag("--sdt,!--no-sdt", opt.sdt, "sentence-level topical discourse");
    sub->add_option("--alpha", opt.alpha, "joint loss weight in [0,1]");
    sub->add_option("--topn", opt.topn, "key terms per topic");
    sub->add_option("--k", opt.k, "number of topics");
  };

  auto* prep = app.add_subcommand("prep", "build vocabularies and report corpus statistics");
  prep->add_option("--corpus", opt.corpus, "corpus file (text or .jsonl)")->required();
  prep->add_option("--stopwords", opt.stopwords, "stopword file, one token per line");
  add_common(prep);
  add_model_flags(prep);

  auto* train = app.add_subcommand("train", "run the three-phase training schedule");
  train->add_option("--corpus", opt.corpus, "training corpus")->required();
  train->add_option("--valid", opt.valid, "validation corpus (default: split from training)");
  train->add_option("--embeddings", opt.embeddings, "word2vec text embeddings");
  train->add_option("--stopwords", opt.stopwords, "stopword file");
  add_common(train);
  add_model_flags(train);

  auto* sweepc = app.add_subcommand("sweep", "two-stage alpha / topN ablation");
  sweepc->add_option("--corpus", opt.corpus, "training corpus")->required();
  sweepc->add_option("--valid", opt.valid, "validation corpus");
  sweepc->add_option("--embeddings", opt.embeddings, "word2vec text embeddings");
  sweepc->add_option("--stopwords", opt.stopwords, "stopword file");
  add_common(sweepc);
  add_model_flags(sweepc);

  auto* evalc = app.add_subcommand("eval", "language-model perplexity of a checkpoint");
  evalc->add_option("--ckpt", opt.ckpt, "checkpoint file")->required();
  evalc->add_option("--corpus", opt.corpus, "evaluation corpus");
  evalc->add_option("--test", opt.test, "alias for --corpus");
  add_common(evalc);

  auto* topicsc = app.add_subcommand("topics", "top key terms per topic");
  topicsc->add_option("--ckpt", opt.ckpt, "checkpoint file")->required();
  topicsc->add_option("--topn", opt.topn, "words per topic (default: config topN)");
  topicsc->add_flag("--json", opt.as_json, "emit JSON instead of text");
  add_common(topicsc);

  auto* cohc = app.add_subcommand("coherence", "NPMI topic coherence against a reference corpus");
  cohc->add_option("--ckpt", opt.ckpt, "checkpoint file")->required();
  cohc->add_option("--corpus", opt.corpus, "reference corpus")->required();
  cohc->add_option("--topn", opt.topn, "words per topic for the report");
  add_common(cohc);

  auto* genc = app.add_subcommand("generate", "greedy topic-conditioned sentence generation");
  genc->add_option("--ckpt", opt.ckpt, "checkpoint file")->required();
  genc->add_option("--topic", opt.topic, "topic index to force, or 'none'");
  genc->add_option("--max-len", opt.max_len, "maximum sentence length");
  genc->add_option("--num", opt.num_sentences, "number of sentences");
  add_common(genc);

  auto* featc = app.add_subcommand("features", "export composite document features");
  featc->add_option("--ckpt", opt.ckpt, "checkpoint file")->required();
  featc->add_option("--corpus", opt.corpus, "documents to featurize (.jsonl for labels)")
      ->required();
  featc->add_option("--format", opt.format, "csv|jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  add_common(featc);

  auto* retrc = app.add_subcommand("retrieve", "precision@k retrieval over composite features");
  retrc->add_option("--ckpt", opt.ckpt, "checkpoint file")->required();
  retrc->add_option("--corpus", opt.corpus, "labeled training documents (.jsonl)")->required();
  retrc->add_option("--test", opt.test, "labeled query documents (.jsonl)")->required();
  retrc->add_option("--ks", opt.ks, "retrieval depths")->delimiter(',');
  add_common(retrc);

  auto* benchc = app.add_subcommand("bench", "topic-context cost scaling in sentence length");
  benchc->add_option("--sizes", opt.sizes, "sentence lengths to benchmark")->delimiter(',');
  benchc->add_option("--reps", opt.reps, "repetitions per size");
  add_common(benchc);
  add_model_flags(benchc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  try {
    nclm::TrainConfig probe;  // resolve precision from config + flags
    if (!opt.config_path.empty()) probe = nclm::load_config(opt.config_path);
    if (opt.precision_set) probe.precision = opt.precision;
    if (probe.precision == "f32") return dispatch<float>(cmd, opt);
    return dispatch<double>(cmd, opt);
  } catch (const nclm::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nclm::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
