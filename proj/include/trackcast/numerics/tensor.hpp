#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "trackcast/errors.hpp"

namespace trackcast::num {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense row-major tensor. Gradient bookkeeping lives on the Tape node that
// owns a tensor, not on the tensor itself.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), v(shape_numel(shape), T(0)) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), v(std::move(values)) {
    if (v.size() != shape_numel(shape)) {
      throw ShapeError("tensor data size " + std::to_string(v.size()) + " does not match shape " +
                       shape_str(shape));
    }
  }

  static Tensor zeros(Shape s) { return Tensor(std::move(s)); }

  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  // 2D accessors; most kernels address raw data directly.
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const {
    std::size_t c = 1;
    for (std::size_t i = 1; i < shape.size(); ++i) c *= shape[i];
    return c;
  }
  T& at(std::size_t i, std::size_t j) { return v[i * cols() + j]; }
  const T& at(std::size_t i, std::size_t j) const { return v[i * cols() + j]; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }
};

inline void check_same_shape(const Shape& a, const Shape& b, const char* op) {
  if (a != b) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " + shape_str(b));
  }
}

}  // namespace trackcast::num
