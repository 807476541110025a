#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "trackcast/errors.hpp"
#include "trackcast/numerics/rng.hpp"
#include "trackcast/numerics/tensor.hpp"

namespace trackcast::num {

// Named parameter with Adam moment slots.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> m;  // first moment
  Tensor<T> v;  // second moment

  Parameter() = default;
  Parameter(std::string n, Tensor<T> val)
      : name(std::move(n)),
        value(std::move(val)),
        m(Tensor<T>::zeros(value.shape)),
        v(Tensor<T>::zeros(value.shape)) {}
};

// Standard sine/cosine position table: row t, pair 2i holds
// sin(t / 10000^(2i/d)) and cos of the same angle.
template <typename T>
Tensor<T> sinusoidal_positional_encoding(std::size_t steps, std::size_t d) {
  if (d % 2 != 0) throw ShapeError("positional encoding width must be even");
  Tensor<T> out({steps, d});
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < d / 2; ++i) {
      double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      double angle = static_cast<double>(t) * freq;
      out.v[t * d + 2 * i] = static_cast<T>(std::sin(angle));
      out.v[t * d + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return out;
}

// Glorot-uniform weights: U(+-sqrt(6/(fan_in+fan_out))).
template <typename T>
Tensor<T> init_linear_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor<T> w({fan_in, fan_out});
  for (auto& x : w.v) x = static_cast<T>(rng.uniform(-limit, limit));
  return w;
}

// Embedding tables: N(0, 0.02).
template <typename T>
Tensor<T> init_embedding(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor<T> w({rows, cols});
  for (auto& x : w.v) x = static_cast<T>(rng.normal(0.0, 0.02));
  return w;
}

}  // namespace trackcast::num
