#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "nclm/tensor.hpp"

namespace nclm {

// Deterministic PRNG: xoshiro256** seeded through splitmix64, normal draws via
// Box-Muller on the raw 53-bit uniforms. The stream depends only on the seed,
// never on platform entropy or std:: distribution internals.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) { reseed(seed); }

  void reseed(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) s = splitmix64(x);
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal draw. Consumes exactly two uniforms per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { state_ = s; }

 private:
  static std::uint64_t splitmix64(std::uint64_t& x) {
    std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

  std::array<std::uint64_t, 4> state_{};
};

template <class T>
Tensor<T> gaussian_sample(Rng& rng, Shape shape) {
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  for (auto& v : out.data) v = static_cast<T>(rng.normal());
  return out;
}

template <class T>
Tensor<T> uniform_sample(Rng& rng, Shape shape, T lo, T hi) {
  Tensor<T> out = Tensor<T>::zeros(std::move(shape));
  for (auto& v : out.data) v = static_cast<T>(rng.uniform(lo, hi));
  return out;
}

}  // namespace nclm
