#pragma once

#include <cmath>
#include <type_traits>
#include <string>
#include <utility>
#include <vector>

#include "nclm/corpus.hpp"
#include "nclm/rng.hpp"
#include "nclm/tape.hpp"
#include "nclm/tensor.hpp"

namespace nclm {

enum class RunMode { train, eval };

/// Activation applied to the sampled latent vector before it is returned.
enum class GActivation { identity, sigmoid, tanh };

template <class T>
using NamedParams = std::vector<std::pair<std::string, Tensor<T>*>>;

/// Gaussian-encoder / softmax-decoder variational topic model.
/// Encoder: one feed-forward layer with sigmoid, then two linear heads for
/// the posterior mean and (pre-softplus) deviation. Decoder: W [K x Z], b [Z].
template <class T>
struct NtmParams {
  Tensor<T> mlp_weight, mlp_bias;
  Tensor<T> l1_weight, l1_bias;
  Tensor<T> l2_weight, l2_bias;
  Tensor<T> W, b;

  std::size_t vocab_size() const { return W.cols(); }
  std::size_t topic_count() const { return W.rows(); }
  std::size_t hidden_size() const { return mlp_weight.rows(); }

  static NtmParams init(std::size_t z, std::size_t k, std::size_t hidden, Rng& rng) {
    const T lim = T(0.05);
    NtmParams p;
    p.mlp_weight = uniform_sample<T>(rng, {hidden, z}, -lim, lim);
    p.mlp_bias = Tensor<T>::zeros({hidden});
    p.l1_weight = uniform_sample<T>(rng, {k, hidden}, -lim, lim);
    p.l1_bias = Tensor<T>::zeros({k});
    p.l2_weight = uniform_sample<T>(rng, {k, hidden}, -lim, lim);
    p.l2_bias = Tensor<T>::zeros({k});
    p.W = uniform_sample<T>(rng, {k, z}, -lim, lim);
    p.b = Tensor<T>::zeros({z});
    return p;
  }

  NamedParams<T> named_params() {
    return {{"ntm.mlp_weight", &mlp_weight}, {"ntm.mlp_bias", &mlp_bias},
            {"ntm.l1_weight", &l1_weight},   {"ntm.l1_bias", &l1_bias},
            {"ntm.l2_weight", &l2_weight},   {"ntm.l2_bias", &l2_bias},
            {"ntm.W", &W},                   {"ntm.b", &b}};
  }
};

template <class T>
struct NtmVars {
  using Index = typename Tape<T>::Index;
  Index mlp_weight, mlp_bias, l1_weight, l1_bias, l2_weight, l2_bias, W, b;
};

template <class T>
NtmVars<T> stage_ntm(Tape<T>& tape, NtmParams<T>& p, bool trainable = true) {
  return NtmVars<T>{tape.leaf(p.mlp_weight, trainable), tape.leaf(p.mlp_bias, trainable),
                    tape.leaf(p.l1_weight, trainable),  tape.leaf(p.l1_bias, trainable),
                    tape.leaf(p.l2_weight, trainable),  tape.leaf(p.l2_bias, trainable),
                    tape.leaf(p.W, trainable),          tape.leaf(p.b, trainable)};
}

/// Leaf indices in the order of NtmParams::named_params().
template <class T>
std::vector<std::pair<std::string, typename Tape<T>::Index>> named_nodes(const NtmVars<T>& v) {
  return {{"ntm.mlp_weight", v.mlp_weight}, {"ntm.mlp_bias", v.mlp_bias},
          {"ntm.l1_weight", v.l1_weight},   {"ntm.l1_bias", v.l1_bias},
          {"ntm.l2_weight", v.l2_weight},   {"ntm.l2_bias", v.l2_bias},
          {"ntm.W", v.W},                   {"ntm.b", v.b}};
}

template <class T>
struct PosteriorNodes {
  using Index = typename Tape<T>::Index;
  Index mu, sigma, h, kld;
};

namespace detail {
template <class T>
typename Tape<T>::Index apply_g(Tape<T>& tape, typename Tape<T>::Index x, GActivation g) {
  switch (g) {
    case GActivation::sigmoid: return tape.sigmoid(x);
    case GActivation::tanh: return tape.tanh_op(x);
    default: return x;
  }
}
}  // namespace detail

/// SAMPLE-h on the tape: pi = sigmoid(mlp v), mu = l1 pi, sigma =
/// softplus(l2 pi) + 1e-6, h = g(mu + eps*sigma) in train mode and g(mu) in
/// eval mode. The KLD node uses the closed form for a diagonal Gaussian
/// against the standard-normal prior.
template <class T>
PosteriorNodes<T> sample_h_nodes(Tape<T>& tape, const NtmVars<T>& ntm,
                                 typename Tape<T>::Index bow_node, RunMode mode, Rng* rng,
                                 std::type_identity_t<const Tensor<T>*> eps_override = nullptr,
                                 GActivation g = GActivation::identity) {
  auto pi = tape.sigmoid(tape.add(tape.matmul(ntm.mlp_weight, bow_node), ntm.mlp_bias));
  auto mu = tape.add(tape.matmul(ntm.l1_weight, pi), ntm.l1_bias);
  auto sigma = tape.add_scalar(tape.softplus(tape.add(tape.matmul(ntm.l2_weight, pi), ntm.l2_bias)),
                               T(1e-6));
  typename Tape<T>::Index h_pre = mu;
  if (mode == RunMode::train) {
    Tensor<T> eps;
    if (eps_override) {
      eps = *eps_override;
    } else {
      if (!rng) throw ConfigError("sample_h: train mode needs an rng");
      eps = gaussian_sample<T>(*rng, tape.value(mu).shape);
    }
    h_pre = tape.add(mu, tape.mul(tape.constant(std::move(eps)), sigma));
  }
  auto h = detail::apply_g(tape, h_pre, g);

  auto log_sigma2 = tape.scale(tape.log_op(sigma), T(2));
  auto inner = tape.add_scalar(
      tape.sub(log_sigma2, tape.add(tape.mul(mu, mu), tape.mul(sigma, sigma))), T(1));
  auto kld = tape.scale(tape.sum(inner), T(-0.5));
  return PosteriorNodes<T>{mu, sigma, h, kld};
}

/// log p(.|h) over the NTM vocabulary: log-softmax(h^T W + b).
template <class T>
typename Tape<T>::Index decode_log_probs_node(Tape<T>& tape, const NtmVars<T>& ntm,
                                              typename Tape<T>::Index h) {
  return tape.log_softmax(tape.add(tape.matvec_t(ntm.W, h), ntm.b));
}

/// Single-sample negative ELBO: -(sum_i v_i log p(i|h) - KLD).
template <class T>
typename Tape<T>::Index ntm_loss_node(Tape<T>& tape, const NtmVars<T>& ntm,
                                      typename Tape<T>::Index bow_node,
                                      const PosteriorNodes<T>& post) {
  auto recon = tape.dot(bow_node, decode_log_probs_node(tape, ntm, post.h));
  return tape.sub(post.kld, recon);
}

// ---- plain (value-level) wrappers ----

template <class T>
struct PosteriorStats {
  Tensor<T> mu, sigma, h;
  T kld = 0;
};

template <class T>
PosteriorStats<T> sample_h(NtmParams<T>& params, const Tensor<T>& bow_vec, RunMode mode,
                           Rng* rng = nullptr, std::type_identity_t<const Tensor<T>*> eps_override = nullptr,
                           GActivation g = GActivation::identity) {
  if (bow_vec.size() != params.vocab_size())
    throw DimensionError("sample_h: BoW length does not match NTM vocabulary");
  Tape<T> tape;
  auto ntm = stage_ntm(tape, params, false);
  auto post = sample_h_nodes(tape, ntm, tape.constant(bow_vec), mode, rng, eps_override, g);
  return PosteriorStats<T>{tape.value(post.mu), tape.value(post.sigma), tape.value(post.h),
                           tape.value(post.kld).item()};
}

/// Closed-form KL(q || N(0, I)) for a diagonal Gaussian; always >= 0.
template <class T>
T kl_divergence(const Tensor<T>& mu, const Tensor<T>& sigma) {
  if (!mu.same_shape(sigma)) throw DimensionError("kl_divergence: shape mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(sigma[i] > T(0))) throw NumericError("kl_divergence: sigma must be positive");
    acc += T(1) + T(2) * std::log(sigma[i]) - mu[i] * mu[i] - sigma[i] * sigma[i];
  }
  return T(-0.5) * acc;
}

template <class T>
Tensor<T> decode_log_probs(NtmParams<T>& params, const Tensor<T>& h) {
  Tape<T> tape;
  auto ntm = stage_ntm(tape, params, false);
  return tape.value(decode_log_probs_node(tape, ntm, tape.constant(h)));
}

template <class T>
T ntm_loss(NtmParams<T>& params, const Tensor<T>& bow_vec, RunMode mode, Rng* rng = nullptr,
           std::type_identity_t<const Tensor<T>*> eps_override = nullptr, GActivation g = GActivation::identity) {
  Tape<T> tape;
  auto ntm = stage_ntm(tape, params, false);
  auto v = tape.constant(bow_vec);
  auto post = sample_h_nodes(tape, ntm, v, mode, rng, eps_override, g);
  return tape.value(ntm_loss_node(tape, ntm, v, post)).item();
}

/// Bound-based per-word perplexity over document views, eval mode:
/// exp(sum_d loss_d / sum_d N_d).
template <class T>
T ntm_perplexity(NtmParams<T>& params, const std::vector<Tensor<T>>& bows,
                 GActivation g = GActivation::identity) {
  if (bows.empty()) throw ConfigError("ntm_perplexity: no documents");
  T loss_total = 0, words_total = 0;
  for (const auto& v : bows) {
    loss_total += ntm_loss(params, v, RunMode::eval, nullptr, nullptr, g);
    for (std::size_t i = 0; i < v.size(); ++i) words_total += v[i];
  }
  if (words_total <= T(0)) throw ConfigError("ntm_perplexity: zero total word count");
  return std::exp(loss_total / words_total);
}

}  // namespace nclm
