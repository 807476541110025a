#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "trackcast/numerics/kernels.hpp"

// OpenMP kernels. Work is split over independent output elements and each
// element keeps the reference accumulation order, so any thread count gives
// the same bits as kernels::serial. Tiny problems stay on one thread via the
// `if` clauses.

namespace trackcast::num::kernels {

namespace {
constexpr std::size_t kParFlops = 1u << 14;
}

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const bool par = m * k * n >= kParFlops;
#pragma omp parallel for if (par) schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    T* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = T(0);
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = a[i * k + p];
      const T* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const bool par = m * k * n >= kParFlops;
#pragma omp parallel for if (par) schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    const T* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* bj = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  const bool par = m * k * n >= kParFlops;
#pragma omp parallel for if (par) schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m); ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
      c[i * n + j] += acc;
    }
  }
}

template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols) {
  const bool par = rows * cols >= kParFlops;
#pragma omp parallel for if (par) schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const T* xr = x + r * cols;
    T* yr = y + r * cols;
    T mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
    T sum = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      sum += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= sum;
  }
}

template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T eps, T* y, T* xhat, T* inv_std,
                     std::size_t rows, std::size_t cols) {
  const bool par = rows * cols >= kParFlops;
#pragma omp parallel for if (par) schedule(static)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const T* xr = x + r * cols;
    T mean = T(0);
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      T d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < cols; ++j) {
      T xh = (xr[j] - mean) * is;
      xhat[r * cols + j] = xh;
      y[r * cols + j] = xh * gain[j] + bias[j];
    }
  }
}

template <typename T>
void attention_forward(const T* q, const T* k, const T* v, T* out, T* probs, std::size_t batch,
                       std::size_t seq, std::size_t heads, std::size_t d) {
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const std::int64_t windows = static_cast<std::int64_t>(batch * heads);
  const bool par = batch * heads * seq * seq * dh >= kParFlops;
#pragma omp parallel for if (par) schedule(static)
  for (std::int64_t w = 0; w < windows; ++w) {
    const std::size_t b = static_cast<std::size_t>(w) / heads;
    const std::size_t h = static_cast<std::size_t>(w) % heads;
    T* p = probs + static_cast<std::size_t>(w) * seq * seq;
    const std::size_t col0 = h * dh;
    for (std::size_t i = 0; i < seq; ++i) {
      const T* qi = q + (b * seq + i) * d + col0;
      T* pi = p + i * seq;
      for (std::size_t j = 0; j < seq; ++j) {
        const T* kj = k + (b * seq + j) * d + col0;
        T s = T(0);
        for (std::size_t c = 0; c < dh; ++c) s += qi[c] * kj[c];
        pi[j] = s * scale;
      }
      T mx = pi[0];
      for (std::size_t j = 1; j < seq; ++j) mx = pi[j] > mx ? pi[j] : mx;
      T sum = T(0);
      for (std::size_t j = 0; j < seq; ++j) {
        pi[j] = std::exp(pi[j] - mx);
        sum += pi[j];
      }
      for (std::size_t j = 0; j < seq; ++j) pi[j] /= sum;
      T* oi = out + (b * seq + i) * d + col0;
      for (std::size_t c = 0; c < dh; ++c) {
        T acc = T(0);
        for (std::size_t j = 0; j < seq; ++j) acc += pi[j] * v[(b * seq + j) * d + col0 + c];
        oi[c] = acc;
      }
    }
  }
}

template <typename T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, std::size_t batch, std::size_t seq, std::size_t heads,
                        std::size_t d) {
  const std::size_t dh = d / heads;
  const T scale = T(1) / std::sqrt(static_cast<T>(dh));
  const std::int64_t windows = static_cast<std::int64_t>(batch * heads);
  const bool par = batch * heads * seq * seq * dh >= kParFlops;
  // Each (batch, head) window touches a disjoint row/column block of the
  // gradients, so windows can run concurrently.
#pragma omp parallel for if (par) schedule(static)
  for (std::int64_t w = 0; w < windows; ++w) {
    const std::size_t b = static_cast<std::size_t>(w) / heads;
    const std::size_t h = static_cast<std::size_t>(w) % heads;
    const T* p = probs + static_cast<std::size_t>(w) * seq * seq;
    const std::size_t col0 = h * dh;
    std::vector<T> dp(seq), ds(seq);
    for (std::size_t i = 0; i < seq; ++i) {
      const T* pi = p + i * seq;
      const T* doi = dout + (b * seq + i) * d + col0;
      for (std::size_t j = 0; j < seq; ++j) {
        const T* vj = v + (b * seq + j) * d + col0;
        T* dvj = dv + (b * seq + j) * d + col0;
        T acc = T(0);
        for (std::size_t c = 0; c < dh; ++c) {
          dvj[c] += pi[j] * doi[c];
          acc += doi[c] * vj[c];
        }
        dp[j] = acc;
      }
      T dot = T(0);
      for (std::size_t j = 0; j < seq; ++j) dot += dp[j] * pi[j];
      for (std::size_t j = 0; j < seq; ++j) ds[j] = pi[j] * (dp[j] - dot) * scale;
      T* dqi = dq + (b * seq + i) * d + col0;
      for (std::size_t j = 0; j < seq; ++j) {
        const T* kj = k + (b * seq + j) * d + col0;
        const T* qi = q + (b * seq + i) * d + col0;
        T* dkj = dk + (b * seq + j) * d + col0;
        for (std::size_t c = 0; c < dh; ++c) {
          dqi[c] += ds[j] * kj[c];
          dkj[c] += ds[j] * qi[c];
        }
      }
    }
  }
}

template void matmul_nn<float>(const float*, const float*, float*, std::size_t, std::size_t,
                               std::size_t);
template void matmul_nn<double>(const double*, const double*, double*, std::size_t, std::size_t,
                                std::size_t);
template void matmul_nt_acc<float>(const float*, const float*, float*, std::size_t, std::size_t,
                                   std::size_t);
template void matmul_nt_acc<double>(const double*, const double*, double*, std::size_t,
                                    std::size_t, std::size_t);
template void matmul_tn_acc<float>(const float*, const float*, float*, std::size_t, std::size_t,
                                   std::size_t);
template void matmul_tn_acc<double>(const double*, const double*, double*, std::size_t,
                                    std::size_t, std::size_t);
template void softmax_rows<float>(const float*, float*, std::size_t, std::size_t);
template void softmax_rows<double>(const double*, double*, std::size_t, std::size_t);
template void layer_norm_rows<float>(const float*, const float*, const float*, float, float*,
                                     float*, float*, std::size_t, std::size_t);
template void layer_norm_rows<double>(const double*, const double*, const double*, double, double*,
                                      double*, double*, std::size_t, std::size_t);
template void attention_forward<float>(const float*, const float*, const float*, float*, float*,
                                       std::size_t, std::size_t, std::size_t, std::size_t);
template void attention_forward<double>(const double*, const double*, const double*, double*,
                                        double*, std::size_t, std::size_t, std::size_t,
                                        std::size_t);
template void attention_backward<float>(const float*, const float*, const float*, const float*,
                                        const float*, float*, float*, float*, std::size_t,
                                        std::size_t, std::size_t, std::size_t);
template void attention_backward<double>(const double*, const double*, const double*,
                                         const double*, const double*, double*, double*, double*,
                                         std::size_t, std::size_t, std::size_t, std::size_t);

}  // namespace trackcast::num::kernels
