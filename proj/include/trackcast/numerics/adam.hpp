#pragma once

#include <cmath>
#include <cstdint>

#include "trackcast/errors.hpp"
#include "trackcast/numerics/layers.hpp"
#include "trackcast/numerics/tensor.hpp"

namespace trackcast::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update of a parameter in place. t counts from 1.
template <typename T>
void adam_step(Parameter<T>& p, const Tensor<T>& grad, const AdamConfig& cfg, std::int64_t t) {
  if (t < 1) throw PreconditionError("adam_step: t must be >= 1");
  check_same_shape(p.value.shape, grad.shape, "adam_step");
  const T b1 = static_cast<T>(cfg.beta1);
  const T b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.lr);
  const T eps = static_cast<T>(cfg.eps);
  const T c1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(t)));
  const T c2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(t)));
  for (std::size_t i = 0; i < p.value.size(); ++i) {
    const T g = grad.v[i];
    p.m.v[i] = b1 * p.m.v[i] + (T(1) - b1) * g;
    p.v.v[i] = b2 * p.v.v[i] + (T(1) - b2) * g * g;
    const T mhat = p.m.v[i] / c1;
    const T vhat = p.v.v[i] / c2;
    p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace trackcast::num
