#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "trackcast/errors.hpp"
#include "trackcast/numerics/kernels.hpp"
#include "trackcast/numerics/tensor.hpp"

namespace trackcast::num {

// Eager reverse-mode autodiff. Every op computes its value immediately and
// records a closure that scatters this node's gradient into its inputs.
// backward() walks the record in exact reverse creation order; creation order
// is a topological order by construction, so each closure sees its node's
// gradient fully accumulated. Gradients add across consumers and across
// repeated backward() calls.
//
// A tape is single-threaded; run concurrent work on separate tapes. The
// kernels underneath are bit-deterministic at any OpenMP thread count.
template <typename T>
class Tape {
 public:
  using Id = std::size_t;

  // Leaf without gradient tracking (inputs, targets, encoding tables).
  Id constant(Tensor<T> v) { return push(std::move(v), false); }

  // Leaf that participates in backward (parameters).
  Id leaf(Tensor<T> v) { return push(std::move(v), true); }

  const Tensor<T>& value(Id id) const { return nodes_[id].value; }
  const Tensor<T>& grad(Id id) const {
    if (!nodes_[id].requires_grad) throw PreconditionError("grad of non-differentiable node");
    return nodes_[id].grad;
  }
  bool requires_grad(Id id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // ---- primitive ops ----

  Id matmul(Id a, Id b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0]) {
      throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape) + " x " +
                       shape_str(B.shape));
    }
    const std::size_t m = A.shape[0], k = A.shape[1], n = B.shape[1];
    Tensor<T> out({m, n});
    kernels::matmul_nn(A.data(), B.data(), out.data(), m, k, n);
    return push(std::move(out), needs(a, b), [this, a, b, m, k, n](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      if (nodes_[a].requires_grad) {
        kernels::matmul_nt_acc(g.data(), val(b).data(), nodes_[a].grad.data(), m, n, k);
      }
      if (nodes_[b].requires_grad) {
        kernels::matmul_tn_acc(val(a).data(), g.data(), nodes_[b].grad.data(), k, m, n);
      }
    });
  }

  Id add(Id a, Id b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    check_same_shape(A.shape, B.shape, "add");
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += B.v[i];
    return push(std::move(out), needs(a, b), [this, a, b](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(a, g.v.data(), g.size());
      accumulate(b, g.v.data(), g.size());
    });
  }

  Id sub(Id a, Id b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    check_same_shape(A.shape, B.shape, "sub");
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= B.v[i];
    return push(std::move(out), needs(a, b), [this, a, b](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(a, g.v.data(), g.size());
      if (nodes_[b].requires_grad) {
        Tensor<T>& gb = nodes_[b].grad;
        for (std::size_t i = 0; i < g.size(); ++i) gb.v[i] -= g.v[i];
      }
    });
  }

  Id mul(Id a, Id b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    check_same_shape(A.shape, B.shape, "mul");
    Tensor<T> out = A;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= B.v[i];
    return push(std::move(out), needs(a, b), [this, a, b](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      if (nodes_[a].requires_grad) {
        Tensor<T>& ga = nodes_[a].grad;
        const Tensor<T>& B2 = val(b);
        for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * B2.v[i];
      }
      if (nodes_[b].requires_grad) {
        Tensor<T>& gb = nodes_[b].grad;
        const Tensor<T>& A2 = val(a);
        for (std::size_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i] * A2.v[i];
      }
    });
  }

  Id scale(Id a, T s) {
    Tensor<T> out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= s;
    return push(std::move(out), needs(a), [this, a, s](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      Tensor<T>& ga = nodes_[a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) ga.v[i] += s * g.v[i];
    });
  }

  // y[i,j] = x[i,j] + b[j]
  Id add_rowvec(Id x, Id b) {
    const Tensor<T>& X = val(x);
    const Tensor<T>& B = val(b);
    const std::size_t cols = X.cols();
    if (B.size() != cols) {
      throw ShapeError("add_rowvec: bias size " + std::to_string(B.size()) + " vs cols " +
                       std::to_string(cols));
    }
    Tensor<T> out = X;
    const std::size_t rows = out.size() / cols;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < cols; ++j) out.v[r * cols + j] += B.v[j];
    }
    return push(std::move(out), needs(x, b), [this, x, b, rows, cols](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(x, g.v.data(), g.size());
      if (nodes_[b].requires_grad) {
        Tensor<T>& gb = nodes_[b].grad;
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t j = 0; j < cols; ++j) gb.v[j] += g.v[r * cols + j];
        }
      }
    });
  }

  Id relu(Id a) {
    Tensor<T> out = val(a);
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] = out.v[i] > T(0) ? out.v[i] : T(0);
    return push(std::move(out), needs(a), [this, a](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      const Tensor<T>& A = val(a);
      Tensor<T>& ga = nodes_[a].grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (A.v[i] > T(0)) ga.v[i] += g.v[i];
      }
    });
  }

  // Softmax over the last dimension.
  Id softmax(Id a) {
    const Tensor<T>& A = val(a);
    if (A.shape.empty()) throw ShapeError("softmax: scalar input");
    const std::size_t cols = A.shape.back();
    const std::size_t rows = A.size() / cols;
    Tensor<T> out(A.shape);
    kernels::softmax_rows(A.data(), out.data(), rows, cols);
    return push(std::move(out), needs(a), [this, a, rows, cols](Id self) {
      const Tensor<T>& y = nodes_[self].value;
      const Tensor<T>& g = nodes_[self].grad;
      Tensor<T>& ga = nodes_[a].grad;
      for (std::size_t r = 0; r < rows; ++r) {
        const T* yr = y.data() + r * cols;
        const T* gr = g.data() + r * cols;
        T dot = T(0);
        for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
        T* gar = ga.data() + r * cols;
        for (std::size_t j = 0; j < cols; ++j) gar[j] += yr[j] * (gr[j] - dot);
      }
    });
  }

  // Layer normalization over the last dimension, with affine gain/bias.
  Id layer_norm(Id x, Id gain, Id bias, T eps) {
    const Tensor<T>& X = val(x);
    const std::size_t cols = X.shape.back();
    const std::size_t rows = X.size() / cols;
    if (val(gain).size() != cols || val(bias).size() != cols) {
      throw ShapeError("layer_norm: gain/bias size must equal the normalized extent");
    }
    Tensor<T> out(X.shape);
    auto xhat = std::make_shared<Tensor<T>>(X.shape);
    auto inv_std = std::make_shared<Tensor<T>>(Shape{rows});
    kernels::layer_norm_rows(X.data(), val(gain).data(), val(bias).data(), eps, out.data(),
                             xhat->data(), inv_std->data(), rows, cols);
    return push(std::move(out), needs(x, gain, bias),
                [this, x, gain, bias, xhat, inv_std, rows, cols](Id self) {
                  const Tensor<T>& g = nodes_[self].grad;
                  if (nodes_[gain].requires_grad) {
                    Tensor<T>& gg = nodes_[gain].grad;
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < cols; ++j)
                        gg.v[j] += g.v[r * cols + j] * xhat->v[r * cols + j];
                  }
                  if (nodes_[bias].requires_grad) {
                    Tensor<T>& gb = nodes_[bias].grad;
                    for (std::size_t r = 0; r < rows; ++r)
                      for (std::size_t j = 0; j < cols; ++j) gb.v[j] += g.v[r * cols + j];
                  }
                  if (nodes_[x].requires_grad) {
                    const T* gw = val(gain).data();
                    Tensor<T>& gx = nodes_[x].grad;
                    std::vector<T> dxhat(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      const T* gr = g.data() + r * cols;
                      const T* xh = xhat->data() + r * cols;
                      T sum_d = T(0), sum_dx = T(0);
                      for (std::size_t j = 0; j < cols; ++j) {
                        dxhat[j] = gr[j] * gw[j];
                        sum_d += dxhat[j];
                        sum_dx += dxhat[j] * xh[j];
                      }
                      const T is = inv_std->v[r];
                      const T inv_n = T(1) / static_cast<T>(cols);
                      T* gxr = gx.data() + r * cols;
                      for (std::size_t j = 0; j < cols; ++j) {
                        gxr[j] += is * (dxhat[j] - inv_n * sum_d - inv_n * xh[j] * sum_dx);
                      }
                    }
                  }
                });
  }

  // Multi-head self-attention core; q/k/v are [batch*seq x d].
  Id attention(Id q, Id k, Id v, std::size_t batch, std::size_t seq, std::size_t heads) {
    const Tensor<T>& Q = val(q);
    const std::size_t d = Q.shape.back();
    if (d % heads != 0) throw ShapeError("attention: width not divisible by head count");
    if (Q.shape.size() != 2 || Q.shape[0] != batch * seq) {
      throw ShapeError("attention: expected [batch*seq x d] input");
    }
    check_same_shape(Q.shape, val(k).shape, "attention q/k");
    check_same_shape(Q.shape, val(v).shape, "attention q/v");
    Tensor<T> out(Q.shape);
    auto probs = std::make_shared<Tensor<T>>(Shape{batch * heads * seq * seq});
    kernels::attention_forward(Q.data(), val(k).data(), val(v).data(), out.data(), probs->data(),
                               batch, seq, heads, d);
    return push(std::move(out), needs(q, k, v),
                [this, q, k, v, probs, batch, seq, heads, d](Id self) {
                  const Tensor<T>& g = nodes_[self].grad;
                  // All three inputs come from the same projections in
                  // practice; compute the full backward whenever any of them
                  // needs gradients.
                  Tensor<T> zq(val(q).shape), zk(val(q).shape), zv(val(q).shape);
                  kernels::attention_backward(val(q).data(), val(k).data(), val(v).data(),
                                              probs->data(), g.data(), zq.data(), zk.data(),
                                              zv.data(), batch, seq, heads, d);
                  accumulate(q, zq.v.data(), zq.size());
                  accumulate(k, zk.v.data(), zk.size());
                  accumulate(v, zv.v.data(), zv.size());
                });
  }

  // Gathers table rows; backward scatter-adds into the table.
  Id embedding_rows(Id table, std::vector<int> rows) {
    const Tensor<T>& Tb = val(table);
    if (Tb.shape.size() != 2) throw ShapeError("embedding_rows: table must be 2D");
    const std::size_t width = Tb.shape[1];
    Tensor<T> out({rows.size(), width});
    for (std::size_t r = 0; r < rows.size(); ++r) {
      int idx = rows[r];
      if (idx < 0 || static_cast<std::size_t>(idx) >= Tb.shape[0]) {
        throw VocabError("embedding_rows: index out of range");
      }
      for (std::size_t j = 0; j < width; ++j) out.v[r * width + j] = Tb.v[idx * width + j];
    }
    auto idxs = std::make_shared<std::vector<int>>(std::move(rows));
    return push(std::move(out), needs(table), [this, table, idxs, width](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      Tensor<T>& gt = nodes_[table].grad;
      for (std::size_t r = 0; r < idxs->size(); ++r) {
        const std::size_t idx = static_cast<std::size_t>((*idxs)[r]);
        for (std::size_t j = 0; j < width; ++j) gt.v[idx * width + j] += g.v[r * width + j];
      }
    });
  }

  Id concat_cols(Id a, Id b) {
    const Tensor<T>& A = val(a);
    const Tensor<T>& B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[0] != B.shape[0]) {
      throw ShapeError("concat_cols: row mismatch");
    }
    const std::size_t rows = A.shape[0], ca = A.shape[1], cb = B.shape[1];
    Tensor<T> out({rows, ca + cb});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < ca; ++j) out.v[r * (ca + cb) + j] = A.v[r * ca + j];
      for (std::size_t j = 0; j < cb; ++j) out.v[r * (ca + cb) + ca + j] = B.v[r * cb + j];
    }
    return push(std::move(out), needs(a, b), [this, a, b, rows, ca, cb](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      if (nodes_[a].requires_grad) {
        Tensor<T>& ga = nodes_[a].grad;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < ca; ++j) ga.v[r * ca + j] += g.v[r * (ca + cb) + j];
      }
      if (nodes_[b].requires_grad) {
        Tensor<T>& gb = nodes_[b].grad;
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < cb; ++j) gb.v[r * cb + j] += g.v[r * (ca + cb) + ca + j];
      }
    });
  }

  Id reshape(Id a, Shape s) {
    const Tensor<T>& A = val(a);
    if (shape_numel(s) != A.size()) {
      throw ShapeError("reshape: element count mismatch " + shape_str(A.shape) + " -> " +
                       shape_str(s));
    }
    Tensor<T> out(std::move(s), A.v);
    return push(std::move(out), needs(a), [this, a](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      accumulate(a, g.v.data(), g.size());
    });
  }

  // Cumulative Euler integration of velocities [B x L x 2] from per-item
  // origins [B x 2]: p[b,j] = origin[b] + dt * sum_{i<=j} v[b,i].
  Id integrate_time(Id vel, const Tensor<T>& origin, T dt) {
    const Tensor<T>& V = val(vel);
    if (V.shape.size() != 3 || V.shape[2] != 2) {
      throw ShapeError("integrate_time: expected [B x L x 2] velocities");
    }
    const std::size_t B = V.shape[0], L = V.shape[1];
    if (origin.shape != Shape{B, 2}) throw ShapeError("integrate_time: origin must be [B x 2]");
    Tensor<T> out(V.shape);
    for (std::size_t b = 0; b < B; ++b) {
      T px = origin.v[b * 2], py = origin.v[b * 2 + 1];
      for (std::size_t j = 0; j < L; ++j) {
        px += dt * V.v[(b * L + j) * 2];
        py += dt * V.v[(b * L + j) * 2 + 1];
        out.v[(b * L + j) * 2] = px;
        out.v[(b * L + j) * 2 + 1] = py;
      }
    }
    return push(std::move(out), needs(vel), [this, vel, B, L, dt](Id self) {
      const Tensor<T>& g = nodes_[self].grad;
      Tensor<T>& gv = nodes_[vel].grad;
      for (std::size_t b = 0; b < B; ++b) {
        T sx = T(0), sy = T(0);
        for (std::size_t j = L; j-- > 0;) {
          sx += g.v[(b * L + j) * 2];
          sy += g.v[(b * L + j) * 2 + 1];
          gv.v[(b * L + j) * 2] += dt * sx;
          gv.v[(b * L + j) * 2 + 1] += dt * sy;
        }
      }
    });
  }

  // scale * sum of all elements -> scalar node of shape [1].
  Id sum_all(Id a, T s) {
    const Tensor<T>& A = val(a);
    T acc = T(0);
    for (std::size_t i = 0; i < A.size(); ++i) acc += A.v[i];
    Tensor<T> out({1});
    out.v[0] = acc * s;
    return push(std::move(out), needs(a), [this, a, s](Id self) {
      const T g = nodes_[self].grad.v[0] * s;
      Tensor<T>& ga = nodes_[a].grad;
      for (std::size_t i = 0; i < ga.size(); ++i) ga.v[i] += g;
    });
  }

  // -scale * sum_i onehot_i * log(max(probs_i, clamp)) -> scalar.
  Id cross_entropy_probs(Id probs, const Tensor<T>& onehot, T s, T clamp) {
    const Tensor<T>& P = val(probs);
    check_same_shape(P.shape, onehot.shape, "cross_entropy_probs");
    T acc = T(0);
    for (std::size_t i = 0; i < P.size(); ++i) {
      if (onehot.v[i] != T(0)) {
        T p = P.v[i] > clamp ? P.v[i] : clamp;
        acc -= onehot.v[i] * std::log(p);
      }
    }
    Tensor<T> out({1});
    out.v[0] = acc * s;
    auto target = std::make_shared<Tensor<T>>(onehot);
    return push(std::move(out), needs(probs), [this, probs, target, s, clamp](Id self) {
      const T g = nodes_[self].grad.v[0] * s;
      const Tensor<T>& P2 = val(probs);
      Tensor<T>& gp = nodes_[probs].grad;
      for (std::size_t i = 0; i < P2.size(); ++i) {
        // Clamped entries are flat in p, so they get no gradient.
        if (target->v[i] != T(0) && P2.v[i] > clamp) {
          gp.v[i] -= g * target->v[i] / P2.v[i];
        }
      }
    });
  }

  // Seeds d(loss)/d(loss) = 1 and runs every recorded closure in reverse.
  // Interior buffers are per-pass scratch; only leaf gradients accumulate
  // across repeated calls.
  void backward(Id loss) {
    if (val(loss).size() != 1) throw ShapeError("backward: loss must be scalar");
    if (!nodes_[loss].requires_grad) {
      throw PreconditionError("backward: loss does not depend on any differentiable leaf");
    }
    for (std::size_t i = 0; i <= loss; ++i) {
      if (nodes_[i].back && nodes_[i].requires_grad)
        std::fill(nodes_[i].grad.v.begin(), nodes_[i].grad.v.end(), T(0));
    }
    nodes_[loss].grad.v[0] += T(1);
    for (std::size_t i = loss + 1; i-- > 0;) {
      if (nodes_[i].back) nodes_[i].back(i);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // zero-sized unless requires_grad
    bool requires_grad = false;
    std::function<void(Id)> back;
  };

  const Tensor<T>& val(Id id) const { return nodes_[id].value; }

  bool needs(Id a) const { return nodes_[a].requires_grad; }
  bool needs(Id a, Id b) const { return nodes_[a].requires_grad || nodes_[b].requires_grad; }
  bool needs(Id a, Id b, Id c) const { return needs(a, b) || nodes_[c].requires_grad; }

  void accumulate(Id id, const T* g, std::size_t n) {
    if (!nodes_[id].requires_grad) return;
    Tensor<T>& dst = nodes_[id].grad;
    for (std::size_t i = 0; i < n; ++i) dst.v[i] += g[i];
  }

  Id push(Tensor<T> value, bool requires_grad, std::function<void(Id)> back = nullptr) {
    Node n;
    n.requires_grad = requires_grad;
    if (requires_grad) n.grad = Tensor<T>::zeros(value.shape);
    n.value = std::move(value);
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace trackcast::num
