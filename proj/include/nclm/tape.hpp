#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "nclm/tensor.hpp"

namespace nclm {

/// Reverse-mode autodiff tape (Wengert list). Nodes are appended in forward
/// order, so reverse creation order is a reverse topological order and
/// backward() visits each node exactly once. Single-threaded during graph
/// construction and backward.
template <class T>
class Tape {
 public:
  using Index = std::uint32_t;

  explicit Tape(bool check_finite = true) : check_finite_(check_finite) { nodes_.reserve(256); }

  Index leaf(Tensor<T> v, bool requires_grad = true) {
    return push(std::move(v), requires_grad, nullptr, "leaf");
  }
  Index constant(Tensor<T> v) { return leaf(std::move(v), false); }

  const Tensor<T>& value(Index i) const { return nodes_[i].value; }
  const Tensor<T>& grad(Index i) const { return nodes_[i].grad; }
  bool requires_grad(Index i) const { return nodes_[i].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void zero_grad() {
    for (auto& n : nodes_) n.grad.fill(T(0));
  }

  /// Accumulates d(root)/d(node) into every node's grad slot. Root must be scalar.
  void backward(Index root) {
    if (!nodes_[root].value.is_scalar())
      throw DimensionError("backward: root must be a scalar, got " +
                           shape_str(nodes_[root].value.shape));
    nodes_[root].grad[0] += T(1);
    for (Index i = root + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (n.requires_grad && n.back) n.back(*this, i);
    }
  }

  // ---- ops ----

  Index matmul(Index ai, Index bi) {
    const Tensor<T>& a = value(ai);
    const Tensor<T>& b = value(bi);
    if (!a.is_matrix() || !(b.is_matrix() || b.is_vector()))
      throw DimensionError("matmul: expected matrix x (matrix|vector)");
    const std::size_t m = a.rows(), k = a.cols();
    if (b.is_vector()) {
      if (b.size() != k)
        throw DimensionError("matmul: inner dims " + shape_str(a.shape) + " vs " +
                             shape_str(b.shape));
      Tensor<T> out = Tensor<T>::zeros({m});
      for (std::size_t i = 0; i < m; ++i) {
        T acc = 0;
        const T* arow = a.data.data() + i * k;
        for (std::size_t j = 0; j < k; ++j) acc += arow[j] * b[j];
        out[i] = acc;
      }
      return push(std::move(out), requires_grad(ai) || requires_grad(bi),
                  [ai, bi](Tape& t, Index self) {
                    const Tensor<T>& g = t.nodes_[self].grad;
                    const Tensor<T>& a = t.value(ai);
                    const Tensor<T>& b = t.value(bi);
                    const std::size_t m = a.rows(), k = a.cols();
                    if (t.requires_grad(ai)) {
                      Tensor<T>& ga = t.nodes_[ai].grad;
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < k; ++j) ga.data[i * k + j] += g[i] * b[j];
                    }
                    if (t.requires_grad(bi)) {
                      Tensor<T>& gb = t.nodes_[bi].grad;
                      for (std::size_t i = 0; i < m; ++i) {
                        const T gi = g[i];
                        const T* arow = a.data.data() + i * k;
                        for (std::size_t j = 0; j < k; ++j) gb[j] += gi * arow[j];
                      }
                    }
                  },
                  "matmul");
    }
    const std::size_t n = b.cols();
    if (b.rows() != k)
      throw DimensionError("matmul: inner dims " + shape_str(a.shape) + " vs " +
                           shape_str(b.shape));
    Tensor<T> out = Tensor<T>::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t p = 0; p < k; ++p) {
        const T aip = a.at(i, p);
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * b.at(p, j);
      }
    return push(std::move(out), requires_grad(ai) || requires_grad(bi),
                [ai, bi](Tape& t, Index self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const Tensor<T>& a = t.value(ai);
                  const Tensor<T>& b = t.value(bi);
                  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
                  if (t.requires_grad(ai)) {
                    Tensor<T>& ga = t.nodes_[ai].grad;
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t j = 0; j < n; ++j) {
                        const T gij = g.at(i, j);
                        for (std::size_t p = 0; p < k; ++p) ga.at(i, p) += gij * b.at(p, j);
                      }
                  }
                  if (t.requires_grad(bi)) {
                    Tensor<T>& gb = t.nodes_[bi].grad;
                    for (std::size_t i = 0; i < m; ++i)
                      for (std::size_t p = 0; p < k; ++p) {
                        const T aip = a.at(i, p);
                        for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += aip * g.at(i, j);
                      }
                  }
                },
                "matmul");
  }

  /// A^T x for A [m x n], x [m] -> [n]. Covers every row-vector-times-matrix
  /// projection without materializing transposes.
  Index matvec_t(Index ai, Index xi) {
    const Tensor<T>& a = value(ai);
    const Tensor<T>& x = value(xi);
    if (!a.is_matrix() || !x.is_vector() || a.rows() != x.size())
      throw DimensionError("matvec_t: need [m x n] and [m], got " + shape_str(a.shape) +
                           " and " + shape_str(x.shape));
    const std::size_t m = a.rows(), n = a.cols();
    Tensor<T> out = Tensor<T>::zeros({n});
    for (std::size_t i = 0; i < m; ++i) {
      const T xiv = x[i];
      const T* arow = a.data.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) out[j] += arow[j] * xiv;
    }
    return push(std::move(out), requires_grad(ai) || requires_grad(xi),
                [ai, xi](Tape& t, Index self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const Tensor<T>& a = t.value(ai);
                  const Tensor<T>& x = t.value(xi);
                  const std::size_t m = a.rows(), n = a.cols();
                  if (t.requires_grad(ai)) {
                    Tensor<T>& ga = t.nodes_[ai].grad;
                    for (std::size_t i = 0; i < m; ++i) {
                      const T xiv = x[i];
                      for (std::size_t j = 0; j < n; ++j) ga.data[i * n + j] += xiv * g[j];
                    }
                  }
                  if (t.requires_grad(xi)) {
                    Tensor<T>& gx = t.nodes_[xi].grad;
                    for (std::size_t i = 0; i < m; ++i) {
                      T acc = 0;
                      const T* arow = a.data.data() + i * n;
                      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * g[j];
                      gx[i] += acc;
                    }
                  }
                },
                "matvec_t");
  }

  Index add(Index ai, Index bi) {
    return binary(ai, bi, "add", [](T a, T b) { return a + b; },
                  [](T, T, T g) { return std::pair<T, T>{g, g}; });
  }
  Index sub(Index ai, Index bi) {
    return binary(ai, bi, "sub", [](T a, T b) { return a - b; },
                  [](T, T, T g) { return std::pair<T, T>{g, -g}; });
  }
  /// Elementwise (hadamard) product.
  Index mul(Index ai, Index bi) {
    return binary(ai, bi, "mul", [](T a, T b) { return a * b; },
                  [](T a, T b, T g) { return std::pair<T, T>{g * b, g * a}; });
  }

  Index scale(Index xi, T c) {
    return unary(xi, "scale", [c](T x) { return c * x; }, [c](T, T, T g) { return c * g; });
  }
  Index add_scalar(Index xi, T c) {
    return unary(xi, "add_scalar", [c](T x) { return x + c; }, [](T, T, T g) { return g; });
  }
  Index sigmoid(Index xi) {
    return unary(xi, "sigmoid", [](T x) { return sigmoid_scalar(x); },
                 [](T, T y, T g) { return g * y * (T(1) - y); });
  }
  Index tanh_op(Index xi) {
    return unary(xi, "tanh", [](T x) { return std::tanh(x); },
                 [](T, T y, T g) { return g * (T(1) - y * y); });
  }
  Index exp_op(Index xi) {
    return unary(xi, "exp", [](T x) { return std::exp(x); }, [](T, T y, T g) { return g * y; });
  }
  Index log_op(Index xi) {
    const Tensor<T>& x = value(xi);
    for (T v : x.data)
      if (!(v > T(0))) throw NumericError("log: non-positive input");
    return unary(xi, "log", [](T x) { return std::log(x); },
                 [](T x, T, T g) { return g / x; });
  }
  Index softplus(Index xi) {
    // log(1 + e^x), computed as max(x,0) + log1p(e^{-|x|}) for stability
    return unary(xi, "softplus",
                 [](T x) {
                   const T ax = x < T(0) ? -x : x;
                   return std::max(x, T(0)) + std::log1p(std::exp(-ax));
                 },
                 [](T x, T, T g) { return g * sigmoid_scalar(x); });
  }

  /// Stable softmax over a vector (max subtraction).
  Index softmax(Index xi) {
    const Tensor<T>& x = value(xi);
    if (!x.is_vector()) throw DimensionError("softmax: expected vector");
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    T mx = x[0];
    for (T v : x.data) mx = std::max(mx, v);
    T z = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      out[i] = std::exp(x[i] - mx);
      z += out[i];
    }
    for (auto& v : out.data) v /= z;
    return push(std::move(out), requires_grad(xi),
                [xi](Tape& t, Index self) {
                  const Tensor<T>& y = t.value(self);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gx = t.nodes_[xi].grad;
                  T gy = 0;
                  for (std::size_t i = 0; i < y.size(); ++i) gy += g[i] * y[i];
                  for (std::size_t i = 0; i < y.size(); ++i) gx[i] += y[i] * (g[i] - gy);
                },
                "softmax");
  }

  /// Stable log-softmax over a vector.
  Index log_softmax(Index xi) {
    const Tensor<T>& x = value(xi);
    if (!x.is_vector()) throw DimensionError("log_softmax: expected vector");
    T mx = x[0];
    for (T v : x.data) mx = std::max(mx, v);
    T z = 0;
    for (T v : x.data) z += std::exp(v - mx);
    const T lse = mx + std::log(z);
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - lse;
    return push(std::move(out), requires_grad(xi),
                [xi](Tape& t, Index self) {
                  const Tensor<T>& y = t.value(self);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gx = t.nodes_[xi].grad;
                  T gs = 0;
                  for (std::size_t i = 0; i < y.size(); ++i) gs += g[i];
                  for (std::size_t i = 0; i < y.size(); ++i)
                    gx[i] += g[i] - std::exp(y[i]) * gs;
                },
                "log_softmax");
  }

  Index sum(Index xi) {
    const Tensor<T>& x = value(xi);
    T acc = 0;
    for (T v : x.data) acc += v;
    return push(Tensor<T>::scalar(acc), requires_grad(xi),
                [xi](Tape& t, Index self) {
                  const T g = t.nodes_[self].grad[0];
                  Tensor<T>& gx = t.nodes_[xi].grad;
                  for (auto& v : gx.data) v += g;
                },
                "sum");
  }

  Index dot(Index ai, Index bi) {
    const Tensor<T>& a = value(ai);
    const Tensor<T>& b = value(bi);
    if (!a.same_shape(b)) throw DimensionError("dot: shape mismatch");
    return push(Tensor<T>::scalar(dot_product(a, b)), requires_grad(ai) || requires_grad(bi),
                [ai, bi](Tape& t, Index self) {
                  const T g = t.nodes_[self].grad[0];
                  const Tensor<T>& a = t.value(ai);
                  const Tensor<T>& b = t.value(bi);
                  if (t.requires_grad(ai)) {
                    Tensor<T>& ga = t.nodes_[ai].grad;
                    for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g * b[i];
                  }
                  if (t.requires_grad(bi)) {
                    Tensor<T>& gb = t.nodes_[bi].grad;
                    for (std::size_t i = 0; i < b.size(); ++i) gb[i] += g * a[i];
                  }
                },
                "dot");
  }

  /// Scalar element x[i].
  Index pick(Index xi, std::size_t i) {
    const Tensor<T>& x = value(xi);
    if (i >= x.size()) throw DimensionError("pick: index out of range");
    return push(Tensor<T>::scalar(x[i]), requires_grad(xi),
                [xi, i](Tape& t, Index self) {
                  t.nodes_[xi].grad[i] += t.nodes_[self].grad[0];
                },
                "pick");
  }

  Index concat(const std::vector<Index>& parts) {
    std::size_t n = 0;
    bool rg = false;
    for (Index p : parts) {
      if (!value(p).is_vector()) throw DimensionError("concat: expected vectors");
      n += value(p).size();
      rg = rg || requires_grad(p);
    }
    Tensor<T> out = Tensor<T>::zeros({n});
    std::size_t off = 0;
    for (Index p : parts)
      for (T v : value(p).data) out[off++] = v;
    return push(std::move(out), rg,
                [parts](Tape& t, Index self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  std::size_t off = 0;
                  for (Index p : parts) {
                    Tensor<T>& gp = t.nodes_[p].grad;
                    if (t.requires_grad(p))
                      for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
                    off += gp.size();
                  }
                },
                "concat");
  }

  /// Subvector [lo, hi) of a vector.
  Index slice(Index xi, std::size_t lo, std::size_t hi) {
    const Tensor<T>& x = value(xi);
    if (!x.is_vector() || lo > hi || hi > x.size()) throw DimensionError("slice: bad range");
    Tensor<T> out = Tensor<T>::zeros({hi - lo});
    for (std::size_t i = lo; i < hi; ++i) out[i - lo] = x[i];
    return push(std::move(out), requires_grad(xi),
                [xi, lo](Tape& t, Index self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gx = t.nodes_[xi].grad;
                  for (std::size_t i = 0; i < g.size(); ++i) gx[lo + i] += g[i];
                },
                "slice");
  }

  /// Column j of a matrix as a vector (embedding lookup).
  Index column(Index mi, std::size_t j) {
    const Tensor<T>& m = value(mi);
    if (!m.is_matrix() || j >= m.cols()) throw DimensionError("column: bad index");
    Tensor<T> out = Tensor<T>::zeros({m.rows()});
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m.at(i, j);
    return push(std::move(out), requires_grad(mi),
                [mi, j](Tape& t, Index self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gm = t.nodes_[mi].grad;
                  const std::size_t cols = t.value(mi).cols();
                  for (std::size_t i = 0; i < g.size(); ++i) gm.data[i * cols + j] += g[i];
                },
                "column");
  }

  /// Row k of the result is the sum of the columns of m listed in groups[k],
  /// divided by divisors[k] (the group size when divisors is empty); empty
  /// groups give a zero row. m is [d x z], result [k x d].
  Index mean_columns(Index mi, std::vector<std::vector<std::size_t>> groups,
                     std::vector<T> divisors = {}) {
    const Tensor<T>& m = value(mi);
    if (!m.is_matrix()) throw DimensionError("mean_columns: expected matrix");
    if (divisors.empty())
      for (const auto& g : groups) divisors.push_back(static_cast<T>(g.size()));
    if (divisors.size() != groups.size())
      throw DimensionError("mean_columns: one divisor per group required");
    const std::size_t d = m.rows(), z = m.cols(), k = groups.size();
    Tensor<T> out = Tensor<T>::zeros({k, d});
    for (std::size_t g = 0; g < k; ++g) {
      if (groups[g].empty()) continue;
      const T inv = T(1) / divisors[g];
      for (std::size_t j : groups[g]) {
        if (j >= z) throw DimensionError("mean_columns: column index out of range");
        for (std::size_t i = 0; i < d; ++i) out.at(g, i) += m.at(i, j) * inv;
      }
    }
    return push(std::move(out), requires_grad(mi),
                [mi, groups = std::move(groups), divisors = std::move(divisors)](Tape& t,
                                                                                 Index self) {
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gm = t.nodes_[mi].grad;
                  const std::size_t d = t.value(mi).rows(), z = t.value(mi).cols();
                  for (std::size_t gk = 0; gk < groups.size(); ++gk) {
                    if (groups[gk].empty()) continue;
                    const T inv = T(1) / divisors[gk];
                    for (std::size_t j : groups[gk])
                      for (std::size_t i = 0; i < d; ++i)
                        gm.data[i * z + j] += g.at(gk, i) * inv;
                  }
                },
                "mean_columns");
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;
    std::function<void(Tape&, Index)> back;
    bool requires_grad = false;
  };

  static T sigmoid_scalar(T x) {
    if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
    const T e = std::exp(x);
    return e / (T(1) + e);
  }

  template <class F, class B>
  Index unary(Index xi, const char* name, F fwd, B bwd) {
    const Tensor<T>& x = value(xi);
    Tensor<T> out = Tensor<T>::zeros(x.shape);
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = fwd(x[i]);
    return push(std::move(out), requires_grad(xi),
                [xi, bwd](Tape& t, Index self) {
                  const Tensor<T>& x = t.value(xi);
                  const Tensor<T>& y = t.value(self);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  Tensor<T>& gx = t.nodes_[xi].grad;
                  for (std::size_t i = 0; i < x.size(); ++i) gx[i] += bwd(x[i], y[i], g[i]);
                },
                name);
  }

  template <class F, class B>
  Index binary(Index ai, Index bi, const char* name, F fwd, B bwd) {
    const Tensor<T>& a = value(ai);
    const Tensor<T>& b = value(bi);
    if (!a.same_shape(b))
      throw DimensionError(std::string(name) + ": shape mismatch " + shape_str(a.shape) +
                           " vs " + shape_str(b.shape));
    Tensor<T> out = Tensor<T>::zeros(a.shape);
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = fwd(a[i], b[i]);
    return push(std::move(out), requires_grad(ai) || requires_grad(bi),
                [ai, bi, bwd](Tape& t, Index self) {
                  const Tensor<T>& a = t.value(ai);
                  const Tensor<T>& b = t.value(bi);
                  const Tensor<T>& g = t.nodes_[self].grad;
                  const bool ra = t.requires_grad(ai), rb = t.requires_grad(bi);
                  Tensor<T>& ga = t.nodes_[ai].grad;
                  Tensor<T>& gb = t.nodes_[bi].grad;
                  for (std::size_t i = 0; i < a.size(); ++i) {
                    auto [da, db] = bwd(a[i], b[i], g[i]);
                    if (ra) ga[i] += da;
                    if (rb) gb[i] += db;
                  }
                },
                name);
  }

  Index push(Tensor<T> v, bool requires_grad, std::function<void(Tape&, Index)> back,
             const char* op) {
    if (check_finite_ && !v.all_finite())
      throw NumericError(std::string(op) + ": non-finite value in forward pass");
    Node n;
    n.grad = Tensor<T>::zeros(v.shape);
    n.value = std::move(v);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<Index>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  bool check_finite_;
};

}  // namespace nclm
