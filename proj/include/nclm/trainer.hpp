#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nclm/checkpoint.hpp"
#include "nclm/evalkit.hpp"
#include "nclm/log.hpp"
#include "nclm/model.hpp"

namespace nclm {

/// Adam with global-norm gradient clipping. Moment buffers are keyed by
/// parameter name so phases can update disjoint parameter subsets.
template <class T>
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double clip) : lr_(lr), clip_(clip) {}

  void step(NamedParams<T>& params, std::unordered_map<std::string, Tensor<T>>& grads) {
    double norm2 = 0;
    for (auto& [name, g] : grads)
      for (T v : g.data) norm2 += static_cast<double>(v) * static_cast<double>(v);
    const double norm = std::sqrt(norm2);
    const double rescale = norm > clip_ ? clip_ / norm : 1.0;

    ++t_;
    const double rate =
        lr_ * std::sqrt(1.0 - std::pow(beta2_, t_)) / (1.0 - std::pow(beta1_, t_));
    for (auto& [name, param] : params) {
      auto git = grads.find(name);
      if (git == grads.end()) continue;
      Tensor<T>& g = git->second;
      auto& m = moment(m_, name, param->shape);
      auto& v = moment(v_, name, param->shape);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double gi = static_cast<double>(g[i]) * rescale;
        m[i] = static_cast<T>(beta1_ * m[i] + (1.0 - beta1_) * gi);
        v[i] = static_cast<T>(beta2_ * v[i] + (1.0 - beta2_) * gi * gi);
        (*param)[i] -= static_cast<T>(rate * m[i] / (std::sqrt(static_cast<double>(v[i])) + eps_));
      }
    }
  }

 private:
  Tensor<T>& moment(std::unordered_map<std::string, Tensor<T>>& store, const std::string& name,
                    const Shape& shape) {
    auto it = store.find(name);
    if (it == store.end()) it = store.emplace(name, Tensor<T>::zeros(shape)).first;
    return it->second;
  }

  double lr_, clip_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::size_t t_ = 0;
  std::unordered_map<std::string, Tensor<T>> m_, v_;
};

namespace detail {

template <class T>
void accumulate_grads(const Tape<T>& tape,
                      const std::vector<std::pair<std::string, typename Tape<T>::Index>>& nodes,
                      std::unordered_map<std::string, Tensor<T>>& acc) {
  for (const auto& [name, idx] : nodes) {
    const Tensor<T>& g = tape.grad(idx);
    auto it = acc.find(name);
    if (it == acc.end())
      acc.emplace(name, g);
    else
      it->second += g;
  }
}

template <class T>
void scale_grads(std::unordered_map<std::string, Tensor<T>>& acc, T factor) {
  for (auto& [name, g] : acc)
    for (auto& v : g.data) v *= factor;
}

inline std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = n; i > 1; --i)
    std::swap(idx[i - 1], idx[static_cast<std::size_t>(rng.uniform() * static_cast<double>(i))]);
  return idx;
}

}  // namespace detail

template <class T>
struct TrainResult {
  Model<T> model;  // best checkpoint by validation perplexity
  std::vector<double> ntm_valid_ppl;    // [0] before phase 1, then one per epoch
  std::vector<double> joint_valid_ppl;  // [0] after pretraining, then one per joint epoch
  std::size_t best_epoch = 0;           // joint epoch index; 0 = post-pretraining state
  double best_valid_ppl = std::numeric_limits<double>::infinity();
  std::size_t joint_epochs_run = 0;
  std::array<std::uint64_t, 4> rng_state{};

  CheckpointState<T> to_checkpoint(const TrainConfig& cfg) {
    CheckpointState<T> st;
    st.model = model;
    st.rng_state = rng_state;
    st.epochs = {{"ntm_pretrain", cfg.ntm_pretrain_epochs},
                 {"nlm_pretrain", cfg.nlm_pretrain_epochs},
                 {"joint", joint_epochs_run}};
    st.best = {{"epoch", best_epoch}, {"valid_perplexity", best_valid_ppl}};
    return st;
  }
};

/// Three-phase schedule: NTM-only pretraining on whole-document BoWs, then
/// NLM pretraining against frozen eval-mode topic contexts, then joint
/// training on L = alpha L_ntm + (1-alpha) L_nlm with early stopping on
/// validation NLM perplexity.
template <class T>
TrainResult<T> train(const TrainConfig& cfg, const RawCorpus& train_corpus,
                     const RawCorpus& valid_corpus, const EmbeddingFile* pretrained = nullptr,
                     const std::unordered_set<std::string>& stopwords = {}) {
  if (train_corpus.docs.empty()) throw ConfigError("train: empty training corpus");
  if (valid_corpus.docs.empty()) throw ConfigError("train: validation split required");

  TrainResult<T> result;
  result.model = build_model<T>(cfg, train_corpus, pretrained, stopwords);
  Model<T>& model = result.model;
  Rng rng(cfg.seed ^ 0x7f4a7c1591d6a5a3ULL);
  AdamOptimizer<T> adam(cfg.lr, cfg.grad_clip);

  const auto g = cfg.g();
  auto train_docs = doc_bows<T>(train_corpus, model.vocab);
  auto valid_docs = doc_bows<T>(valid_corpus, model.vocab);

  auto run_phase = [&](const char* phase, std::size_t epochs, auto&& epoch_body) {
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
      try {
        epoch_body(epoch);
      } catch (const NumericError& e) {
        throw NumericError("training diverged (" + std::string(phase) + " epoch " +
                           std::to_string(epoch) + "): " + e.what());
      }
    }
  };

  // phase 1: NTM pretraining on whole documents
  result.ntm_valid_ppl.push_back(ntm_perplexity(model.ntm, valid_docs, g));
  run_phase("ntm_pretrain", cfg.ntm_pretrain_epochs, [&](std::size_t epoch) {
    auto order = detail::shuffled_indices(train_docs.size(), rng);
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::unordered_map<std::string, Tensor<T>> grads;
      for (std::size_t i = lo; i < hi; ++i) {
        Tape<T> tape;
        auto vars = stage_ntm(tape, model.ntm, true);
        auto bnode = tape.constant(train_docs[order[i]]);
        typename Tape<T>::Index loss = 0;
        for (std::size_t s = 0; s < cfg.elbo_samples; ++s) {
          auto post = sample_h_nodes(tape, vars, bnode, RunMode::train, &rng, nullptr, g);
          auto l = ntm_loss_node(tape, vars, bnode, post);
          loss = s == 0 ? l : tape.add(loss, l);
        }
        if (cfg.elbo_samples > 1)
          loss = tape.scale(loss, T(1) / static_cast<T>(cfg.elbo_samples));
        tape.backward(loss);
        detail::accumulate_grads(tape, named_nodes(vars), grads);
      }
      detail::scale_grads(grads, T(1) / static_cast<T>(hi - lo));
      auto params = model.ntm.named_params();
      adam.step(params, grads);
    }
    result.ntm_valid_ppl.push_back(ntm_perplexity(model.ntm, valid_docs, g));
    std::ostringstream os;
    os << "phase=ntm_pretrain epoch=" << epoch << " valid_ntm_ppl=" << result.ntm_valid_ppl.back();
    log_info(os.str());
  });

  auto units = build_units<T>(train_corpus, model.vocab, cfg);
  if (units.empty()) throw ConfigError("train: corpus produced no sequences");

  // phase 2: NLM pretraining with topic contexts frozen from phase 1
  run_phase("nlm_pretrain", cfg.nlm_pretrain_epochs, [&](std::size_t epoch) {
    auto order = detail::shuffled_indices(units.size(), rng);
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::unordered_map<std::string, Tensor<T>> grads;
      for (std::size_t i = lo; i < hi; ++i) {
        Tape<T> tape;
        auto staged = stage_model(tape, model, false, true, false);
        auto losses =
            sentence_loss_nodes(tape, staged, model, units[order[i]], RunMode::eval,
                                RunMode::train, &rng);
        tape.backward(losses.nlm_loss);
        detail::accumulate_grads(tape, named_nodes(staged.nlm), grads);
      }
      detail::scale_grads(grads, T(1) / static_cast<T>(hi - lo));
      auto params = model.nlm.named_params();
      adam.step(params, grads);
    }
    std::ostringstream os;
    os << "phase=nlm_pretrain epoch=" << epoch;
    log_info(os.str());
  });

  // phase 3: joint training with early stopping on validation perplexity
  const bool train_emb = !cfg.freeze_embeddings;
  double best = lm_perplexity(model, valid_corpus);
  result.joint_valid_ppl.push_back(best);
  Model<T> best_model = model;
  result.best_epoch = 0;
  result.best_valid_ppl = best;
  std::size_t patience_left = cfg.early_stop_patience;

  run_phase("joint", cfg.max_epochs, [&](std::size_t epoch) {
    if (patience_left == 0) return;
    auto order = detail::shuffled_indices(units.size(), rng);
    for (std::size_t lo = 0; lo < order.size(); lo += cfg.batch_size) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      std::unordered_map<std::string, Tensor<T>> grads;
      for (std::size_t i = lo; i < hi; ++i) {
        Tape<T> tape;
        auto staged = stage_model(tape, model, true, true, train_emb);
        auto losses = sentence_loss_nodes(tape, staged, model, units[order[i]], RunMode::train,
                                          RunMode::train, &rng);
        tape.backward(joint_loss_node(tape, losses, static_cast<T>(cfg.alpha)));
        detail::accumulate_grads(tape, named_nodes(staged.ntm), grads);
        detail::accumulate_grads(tape, named_nodes(staged.nlm), grads);
        if (train_emb)
          detail::accumulate_grads(
              tape, {{std::string("emb.E"), staged.emb}}, grads);
      }
      detail::scale_grads(grads, T(1) / static_cast<T>(hi - lo));
      auto params = model.all_params();
      adam.step(params, grads);
    }
    result.joint_epochs_run = epoch;
    const double ppl = lm_perplexity(model, valid_corpus);
    result.joint_valid_ppl.push_back(ppl);
    std::ostringstream os;
    os << "phase=joint epoch=" << epoch << " valid_ppl=" << ppl << " best=" << best;
    log_info(os.str());
    if (ppl < best) {
      best = ppl;
      best_model = model;
      result.best_epoch = epoch;
      result.best_valid_ppl = ppl;
      patience_left = cfg.early_stop_patience;
    } else if (--patience_left == 0) {
      log_info("phase=joint early_stop=1 best_epoch=" + std::to_string(result.best_epoch));
    }
  });

  result.model = std::move(best_model);
  result.rng_state = rng.state();
  return result;
}

// ---- ablation sweep ----

struct SweepRow {
  std::string leg;  // "alpha" or "topN"
  double alpha = 0;
  std::size_t topn = 0;
  double valid_ppl = 0;
};

struct SweepReport {
  std::vector<SweepRow> rows;
  double best_alpha = 0;
  std::size_t best_topn = 0;
};

/// Two-stage ablation: find the best alpha with the LTA configuration, then
/// freeze it and find the best topN with ETA. Ties break toward the smaller
/// alpha, then the smaller topN.
template <class T>
SweepReport sweep(const TrainConfig& base, const RawCorpus& train_corpus,
                  const RawCorpus& valid_corpus, const EmbeddingFile* pretrained = nullptr,
                  const std::unordered_set<std::string>& stopwords = {},
                  std::vector<double> alpha_grid = {0.5, 0.1, 0.01},
                  std::vector<std::size_t> topn_grid = {10, 20, 40}) {
  if (alpha_grid.empty() || topn_grid.empty()) throw ConfigError("sweep: empty grid");
  SweepReport report;

  auto run = [&](const TrainConfig& cfg) {
    auto r = train<T>(cfg, train_corpus, valid_corpus, pretrained, stopwords);
    return r.best_valid_ppl;
  };

  double best_ppl = std::numeric_limits<double>::infinity();
  report.best_alpha = alpha_grid.front();
  for (double a : alpha_grid) {
    TrainConfig cfg = base;
    cfg.variant = "lta";
    cfg.sdt = false;
    cfg.alpha = a;
    const double ppl = run(cfg);
    report.rows.push_back(SweepRow{"alpha", a, base.topN, ppl});
    if (ppl < best_ppl || (ppl == best_ppl && a < report.best_alpha)) {
      best_ppl = ppl;
      report.best_alpha = a;
    }
    log_info("phase=sweep leg=alpha alpha=" + std::to_string(a) +
             " valid_ppl=" + std::to_string(ppl));
  }

  best_ppl = std::numeric_limits<double>::infinity();
  report.best_topn = topn_grid.front();
  for (std::size_t n : topn_grid) {
    TrainConfig cfg = base;
    cfg.variant = "eta";
    cfg.sdt = false;
    cfg.alpha = report.best_alpha;
    cfg.topN = n;
    const double ppl = run(cfg);
    report.rows.push_back(SweepRow{"topN", report.best_alpha, n, ppl});
    if (ppl < best_ppl || (ppl == best_ppl && n < report.best_topn)) {
      best_ppl = ppl;
      report.best_topn = n;
    }
    log_info("phase=sweep leg=topN topN=" + std::to_string(n) +
             " valid_ppl=" + std::to_string(ppl));
  }
  return report;
}

}  // namespace nclm
