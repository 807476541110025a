#pragma once

#include <cstddef>

namespace trackcast::num::kernels {

// Dense kernels behind the tape ops. The parallel versions split work over
// independent output elements only, and every element keeps the same serial
// accumulation order, so results are bit-identical to kernels::serial at any
// thread count. tests/test_kernels.cpp asserts that parity bytewise and
// tools/bench_kernels.cpp compares throughput.

// c[m*n] = a[m*k] * b[k*n]
template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// c[m*n] += a[m*k] * b[n*k]^T   (b stored row-major [n x k])
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// c[m*n] += a[k*m]^T * b[k*n]   (a stored row-major [k x m])
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);

// Row-wise stabilized softmax: y[r,:] = exp(x - max) / sum.
template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols);

// Row-wise layer normalization. Saves xhat and 1/sqrt(var+eps) for backward.
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T eps, T* y, T* xhat, T* inv_std,
                     std::size_t rows, std::size_t cols);

// Multi-head scaled dot-product attention over `batch` windows of `seq`
// tokens. q/k/v/out are [batch*seq x d] with head h occupying columns
// [h*dh, (h+1)*dh), dh = d/heads. probs is a [batch*heads*seq*seq] scratch
// holding the attention weights for backward.
template <typename T>
void attention_forward(const T* q, const T* k, const T* v, T* out, T* probs, std::size_t batch,
                       std::size_t seq, std::size_t heads, std::size_t d);

// Accumulates into dq/dk/dv.
template <typename T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, std::size_t batch, std::size_t seq, std::size_t heads,
                        std::size_t d);

namespace serial {

template <typename T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n);
template <typename T>
void softmax_rows(const T* x, T* y, std::size_t rows, std::size_t cols);
template <typename T>
void layer_norm_rows(const T* x, const T* gain, const T* bias, T eps, T* y, T* xhat, T* inv_std,
                     std::size_t rows, std::size_t cols);
template <typename T>
void attention_forward(const T* q, const T* k, const T* v, T* out, T* probs, std::size_t batch,
                       std::size_t seq, std::size_t heads, std::size_t d);
template <typename T>
void attention_backward(const T* q, const T* k, const T* v, const T* probs, const T* dout, T* dq,
                        T* dk, T* dv, std::size_t batch, std::size_t seq, std::size_t heads,
                        std::size_t d);

}  // namespace serial

}  // namespace trackcast::num::kernels
