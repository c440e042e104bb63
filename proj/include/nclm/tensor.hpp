#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace nclm {

struct DimensionError : std::runtime_error {
  explicit DimensionError(const std::string& what) : std::runtime_error(what) {}
};

struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

/// Dense row-major tensor. Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix.
template <class T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size())
      throw DimensionError("tensor: shape " + shape_str(shape) + " does not match " +
                           std::to_string(data.size()) + " values");
  }

  static Tensor zeros(Shape s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<T>(n, T(0)));
  }
  static Tensor full(Shape s, T v) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<T>(n, v));
  }
  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }
  static Tensor vector(std::vector<T> d) {
    Shape s{d.size()};
    return Tensor(std::move(s), std::move(d));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> d) {
    return Tensor(Shape{rows, cols}, std::move(d));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  bool is_scalar() const { return rank() == 0; }
  bool is_vector() const { return rank() == 1; }
  bool is_matrix() const { return rank() == 2; }

  std::size_t rows() const { return shape.at(0); }
  std::size_t cols() const { return shape.at(1); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  T& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  T item() const {
    if (data.size() != 1) throw DimensionError("item: tensor is not a scalar");
    return data[0];
  }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  Tensor& operator+=(const Tensor& o) {
    if (!same_shape(o)) throw DimensionError("+=: shape mismatch");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> d(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) d[i] = static_cast<U>(data[i]);
    return Tensor<U>(shape, std::move(d));
  }
};

template <class T>
T dot_product(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw DimensionError("dot: shape mismatch");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace nclm
