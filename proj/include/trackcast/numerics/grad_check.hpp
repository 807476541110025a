#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "trackcast/numerics/layers.hpp"
#include "trackcast/numerics/tensor.hpp"

namespace trackcast::num {

// Compares tape gradients against central finite differences
// (f(w+h) - f(w-h)) / 2h, coordinate by coordinate. `loss` evaluates the
// scalar at the current parameter values; `grads` runs forward+backward and
// returns dL/dp for each checked parameter, in order. Run at 64-bit.
template <typename T>
struct Differentiable {
  std::function<T()> loss;
  std::function<std::vector<Tensor<T>>()> grads;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
};

template <typename T>
GradCheckReport grad_check(const Differentiable<T>& f, std::vector<Parameter<T>*> params, T h) {
  std::vector<Tensor<T>> analytic = f.grads();
  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<T>& w = params[pi]->value;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const T saved = w.v[i];
      w.v[i] = saved + h;
      const T fp = f.loss();
      w.v[i] = saved - h;
      const T fm = f.loss();
      w.v[i] = saved;
      const double fd = (static_cast<double>(fp) - static_cast<double>(fm)) / (2.0 * h);
      const double an = static_cast<double>(analytic[pi].v[i]);
      // The floor keeps structurally-zero gradients (dead relu units, the
      // softmax-cancelled key bias) from scoring forward rounding noise as
      // relative error; at 64-bit that noise stays well below 1e-4 * floor.
      const double denom = std::max({std::abs(an), std::abs(fd), 1e-4});
      const double err = std::abs(an - fd) / denom;
      if (err > report.max_rel_err) report.max_rel_err = err;
      ++report.coords_checked;
    }
  }
  return report;
}

}  // namespace trackcast::num
