#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "devias/errors.hpp"
#include "devias/tensor.hpp"

namespace devias {

template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  int group = 0;

  Param(std::string n, Tensor<S> v, int g = 0)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()), group(g) {}
};

template <typename S>
class Tape;

// Handle into a tape node. Copyable, trivially small.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int32_t id = -1;
};

// Define-by-run reverse-mode tape. Rebuilt per forward pass; one backward per
// tape. Nodes are appended in evaluation order, so reverse id order is a valid
// topological order for the backward sweep.
template <typename S>
class Tape {
 public:
  using BackFn = std::function<void(Tape&, int32_t)>;

  struct Node {
    Tensor<S> value;
    const Tensor<S>* ext = nullptr;  // external storage for param leaves
    Tensor<S> grad;
    bool touched = false;
    Param<S>* leaf = nullptr;
    BackFn back;
  };

  Var<S> constant(Tensor<S> v) {
    nodes_.push_back(Node{std::move(v), nullptr, {}, false, nullptr, nullptr});
    return {this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  Var<S> param(Param<S>& p) {
    nodes_.push_back(Node{{}, &p.value, {}, false, &p, nullptr});
    return {this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  Var<S> push(Tensor<S> v, BackFn back) {
    nodes_.push_back(Node{std::move(v), nullptr, {}, false, nullptr, std::move(back)});
    return {this, static_cast<int32_t>(nodes_.size() - 1)};
  }

  const Tensor<S>& val(int32_t id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.value;
  }
  const Tensor<S>& val(Var<S> v) const { return val(v.id); }

  // Accumulation target for a parent's gradient; allocates on first touch.
  Tensor<S>& grad_acc(int32_t id) {
    Node& n = nodes_[id];
    if (!n.touched) {
      n.grad = Tensor<S>(val(id).shape());
      n.touched = true;
    }
    return n.grad;
  }

  bool touched(int32_t id) const { return nodes_[id].touched; }

  // Gradient of the last backward() w.r.t. this node; zeros if unreached.
  const Tensor<S>& grad(Var<S> v) {
    Node& n = nodes_[v.id];
    if (!n.touched) {
      n.grad = Tensor<S>(val(v.id).shape());
      n.touched = true;
    }
    return n.grad;
  }

  void backward(Var<S> loss) {
    if (consumed_)
      throw UsageError("backward() called twice on the same tape");
    if (val(loss.id).numel() != 1)
      throw UsageError("backward() requires a scalar loss");
    consumed_ = true;
    grad_acc(loss.id)[0] = S(1);
    for (int32_t id = loss.id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.touched && n.back) n.back(*this, id);
    }
    for (Node& n : nodes_)
      if (n.leaf && n.touched)
        for (int64_t i = 0; i < n.grad.numel(); ++i) n.leaf->grad[i] += n.grad[i];
  }

  bool consumed() const { return consumed_; }
  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

namespace tapeops {

template <typename S>
void acc_into(Tensor<S>& dst, const Tensor<S>& src) {
  for (int64_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
}

}  // namespace tapeops

// ---------------------------------------------------------------------------
// differentiable ops
// ---------------------------------------------------------------------------

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = add(t.val(a), t.val(b));
  return t.push(std::move(v), [ia = a.id, ib = b.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    tapeops::acc_into(tp.grad_acc(ia), g);
    tapeops::acc_into(tp.grad_acc(ib), g);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& A = t.val(a);
  const Tensor<S>& B = t.val(b);
  if (!A.same_shape(B)) throw ShapeError("sub shape mismatch");
  Tensor<S> v(A.shape());
  for (int64_t i = 0; i < A.numel(); ++i) v[i] = A[i] - B[i];
  return t.push(std::move(v), [ia = a.id, ib = b.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    tapeops::acc_into(tp.grad_acc(ia), g);
    Tensor<S>& gb = tp.grad_acc(ib);
    for (int64_t i = 0; i < g.numel(); ++i) gb[i] -= g[i];
  });
}

template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& A = t.val(a);
  const Tensor<S>& B = t.val(b);
  if (!A.same_shape(B)) throw ShapeError("mul shape mismatch");
  Tensor<S> v(A.shape());
  for (int64_t i = 0; i < A.numel(); ++i) v[i] = A[i] * B[i];
  return t.push(std::move(v), [ia = a.id, ib = b.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    const Tensor<S>& A2 = tp.val(ia);
    const Tensor<S>& B2 = tp.val(ib);
    Tensor<S>& ga = tp.grad_acc(ia);
    Tensor<S>& gb = tp.grad_acc(ib);
    for (int64_t i = 0; i < g.numel(); ++i) {
      ga[i] += g[i] * B2[i];
      gb[i] += g[i] * A2[i];
    }
  });
}

template <typename S>
Var<S> scale(Var<S> a, S s) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = scale(t.val(a), s);
  return t.push(std::move(v), [ia = a.id, s](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * s;
  });
}

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = matmul(t.val(a), t.val(b));
  return t.push(std::move(v), [ia = a.id, ib = b.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    const Tensor<S>& A = tp.val(ia);
    const Tensor<S>& B = tp.val(ib);
    gemm_nt_acc(g.data(), B.data(), tp.grad_acc(ia).data(), A.rows(), B.cols(),
                A.cols());
    gemm_tn_acc(A.data(), g.data(), tp.grad_acc(ib).data(), A.rows(), A.cols(),
                B.cols());
  });
}

template <typename S>
Var<S> transpose(Var<S> a) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = transpose(t.val(a));
  return t.push(std::move(v), [ia = a.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    const int64_t r = ga.rows(), c = ga.cols();
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) ga(i, j) += g(j, i);
  });
}

// x [m x n] + v [n], broadcast over rows
template <typename S>
Var<S> add_rowvec(Var<S> x, Var<S> v) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& X = t.val(x);
  const Tensor<S>& V = t.val(v);
  if (X.rank() != 2 || V.numel() != X.cols())
    throw ShapeError("add_rowvec: need [m x n] plus [n]");
  Tensor<S> out(X.shape());
  for (int64_t i = 0; i < X.rows(); ++i)
    for (int64_t j = 0; j < X.cols(); ++j) out(i, j) = X(i, j) + V[j];
  return t.push(std::move(out), [ix = x.id, iv = v.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    tapeops::acc_into(tp.grad_acc(ix), g);
    Tensor<S>& gv = tp.grad_acc(iv);
    for (int64_t i = 0; i < g.rows(); ++i)
      for (int64_t j = 0; j < g.cols(); ++j) gv[j] += g(i, j);
  });
}

template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  return add_rowvec(matmul(x, w), b);
}

template <typename S>
Var<S> gelu(Var<S> a) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = gelu(t.val(a));
  return t.push(std::move(v), [ia = a.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    const Tensor<S>& X = tp.val(ia);
    Tensor<S>& ga = tp.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i)
      ga[i] += g[i] * gelu_grad_scalar(X[i]);
  });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& X = t.val(a);
  Tensor<S> v(X.shape());
  for (int64_t i = 0; i < X.numel(); ++i) v[i] = S(1) / (S(1) + std::exp(-X[i]));
  return t.push(std::move(v), [ia = a.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    const Tensor<S>& Y = tp.val(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * Y[i] * (S(1) - Y[i]);
  });
}

template <typename S>
Var<S> softmax_axis(Var<S> a, int64_t axis) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = softmax_axis(t.val(a), axis);
  return t.push(std::move(v), [ia = a.id, axis](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    const Tensor<S>& Y = tp.val(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    detail::for_each_fiber<S>(
        Y.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
          S dot = 0;
          for (int64_t i = 0; i < len; ++i)
            dot += g[base + i * stride] * Y[base + i * stride];
          for (int64_t i = 0; i < len; ++i) {
            const int64_t p = base + i * stride;
            ga[p] += Y[p] * (g[p] - dot);
          }
        });
  });
}

template <typename S>
Var<S> l2_normalize_axis(Var<S> a, int64_t axis, S eps) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = l2_normalize_axis(t.val(a), axis, eps);
  return t.push(std::move(v), [ia = a.id, axis, eps](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    const Tensor<S>& X = tp.val(ia);
    const Tensor<S>& Y = tp.val(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    detail::for_each_fiber<S>(
        X.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
          S sq = 0;
          for (int64_t i = 0; i < len; ++i) {
            const S x = X[base + i * stride];
            sq += x * x;
          }
          const S n = std::sqrt(sq);
          if (n > eps) {
            S dot = 0;
            for (int64_t i = 0; i < len; ++i)
              dot += g[base + i * stride] * Y[base + i * stride];
            for (int64_t i = 0; i < len; ++i) {
              const int64_t p = base + i * stride;
              ga[p] += (g[p] - Y[p] * dot) / n;
            }
          } else {
            for (int64_t i = 0; i < len; ++i) {
              const int64_t p = base + i * stride;
              ga[p] += g[p] / eps;
            }
          }
        });
  });
}

template <typename S>
Var<S> layer_norm(Var<S> x, Var<S> gain, Var<S> bias, S eps) {
  Tape<S>& t = *x.tape;
  const Tensor<S>& X = t.val(x);
  const int64_t d = X.shape().back();
  Tensor<S> v = layer_norm(t.val(x), t.val(gain), t.val(bias), eps);
  return t.push(
      std::move(v),
      [ix = x.id, ig = gain.id, ib = bias.id, d, eps](Tape<S>& tp, int32_t id) {
        const Tensor<S>& g = tp.grad_acc(id);
        const Tensor<S>& X2 = tp.val(ix);
        const Tensor<S>& G = tp.val(ig);
        Tensor<S>& gx = tp.grad_acc(ix);
        Tensor<S>& gg = tp.grad_acc(ig);
        Tensor<S>& gb = tp.grad_acc(ib);
        const int64_t rows = X2.numel() / d;
        for (int64_t r = 0; r < rows; ++r) {
          const S* xr = X2.data() + r * d;
          const S* gr = g.data() + r * d;
          S* gxr = gx.data() + r * d;
          S mean = 0;
          for (int64_t j = 0; j < d; ++j) mean += xr[j];
          mean /= static_cast<S>(d);
          S var = 0;
          for (int64_t j = 0; j < d; ++j) {
            const S c = xr[j] - mean;
            var += c * c;
          }
          var /= static_cast<S>(d);
          const S rstd = S(1) / std::sqrt(var + eps);
          S mean_h = 0, mean_hx = 0;
          for (int64_t j = 0; j < d; ++j) {
            const S xhat = (xr[j] - mean) * rstd;
            const S h = gr[j] * G[j];
            mean_h += h;
            mean_hx += h * xhat;
            gg[j] += gr[j] * xhat;
            gb[j] += gr[j];
          }
          mean_h /= static_cast<S>(d);
          mean_hx /= static_cast<S>(d);
          for (int64_t j = 0; j < d; ++j) {
            const S xhat = (xr[j] - mean) * rstd;
            gxr[j] += rstd * (gr[j] * G[j] - mean_h - xhat * mean_hx);
          }
        }
      });
}

template <typename S>
Var<S> sum(Var<S> a) {
  Tape<S>& t = *a.tape;
  return t.push(Tensor<S>::scalar(sum(t.val(a))),
                [ia = a.id](Tape<S>& tp, int32_t id) {
                  const S g = tp.grad_acc(id)[0];
                  Tensor<S>& ga = tp.grad_acc(ia);
                  for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += g;
                });
}

template <typename S>
Var<S> mean(Var<S> a) {
  Tape<S>& t = *a.tape;
  const int64_t n = t.val(a).numel();
  return scale(sum(a), S(1) / static_cast<S>(n));
}

template <typename S>
Var<S> row(Var<S> a, int64_t i) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = row_of(t.val(a), i);
  return t.push(std::move(v), [ia = a.id, i](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    for (int64_t j = 0; j < g.numel(); ++j) ga(i, j) += g[j];
  });
}

template <typename S>
Var<S> col(Var<S> a, int64_t j) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = col_of(t.val(a), j);
  return t.push(std::move(v), [ia = a.id, j](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i) ga(i, j) += g[i];
  });
}

template <typename S>
Var<S> concat_rows(Var<S> a, Var<S> b) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& A = t.val(a);
  const Tensor<S>& B = t.val(b);
  if (A.cols() != B.cols()) throw ShapeError("concat_rows column mismatch");
  Tensor<S> v({A.rows() + B.rows(), A.cols()});
  std::copy(A.data(), A.data() + A.numel(), v.data());
  std::copy(B.data(), B.data() + B.numel(), v.data() + A.numel());
  return t.push(std::move(v),
                [ia = a.id, ib = b.id, na = A.numel()](Tape<S>& tp, int32_t id) {
                  const Tensor<S>& g = tp.grad_acc(id);
                  Tensor<S>& ga = tp.grad_acc(ia);
                  Tensor<S>& gb = tp.grad_acc(ib);
                  for (int64_t i = 0; i < na; ++i) ga[i] += g[i];
                  for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += g[na + i];
                });
}

// Standard multi-head attention: per head, softmax(q kT / sqrt(dh)) v, heads
// concatenated back to width D. Softmax over keys, one fused node.
template <typename S>
Var<S> attention_heads(Var<S> q, Var<S> k, Var<S> v, int64_t heads) {
  Tape<S>& t = *q.tape;
  const Tensor<S>& Q = t.val(q);
  const Tensor<S>& K = t.val(k);
  const Tensor<S>& V = t.val(v);
  const int64_t nq = Q.rows(), nk = K.rows(), dm = Q.cols();
  if (dm % heads != 0) throw ShapeError("attention: head count must divide D");
  if (K.cols() != dm || V.cols() != dm || V.rows() != nk)
    throw ShapeError("attention shape mismatch");
  const int64_t dh = dm / heads;
  const S inv_sqrt = S(1) / std::sqrt(static_cast<S>(dh));

  Tensor<S> probs({heads, nq, nk});
  Tensor<S> out({nq, dm});
  std::vector<S> scores(nk);
  for (int64_t h = 0; h < heads; ++h) {
    const int64_t off = h * dh;
    for (int64_t i = 0; i < nq; ++i) {
      const S* qi = Q.data() + i * dm + off;
      S mx = -std::numeric_limits<S>::infinity();
      for (int64_t j = 0; j < nk; ++j) {
        const S* kj = K.data() + j * dm + off;
        S acc = 0;
        for (int64_t c = 0; c < dh; ++c) acc += qi[c] * kj[c];
        scores[j] = acc * inv_sqrt;
        mx = std::max(mx, scores[j]);
      }
      S denom = 0;
      S* pi = probs.data() + (h * nq + i) * nk;
      for (int64_t j = 0; j < nk; ++j) {
        pi[j] = std::exp(scores[j] - mx);
        denom += pi[j];
      }
      const S inv = S(1) / denom;
      S* oi = out.data() + i * dm + off;
      for (int64_t j = 0; j < nk; ++j) {
        pi[j] *= inv;
        const S p = pi[j];
        const S* vj = V.data() + j * dm + off;
        for (int64_t c = 0; c < dh; ++c) oi[c] += p * vj[c];
      }
    }
  }

  return t.push(
      std::move(out),
      [iq = q.id, ik = k.id, iv = v.id, heads, nq, nk, dm, dh, inv_sqrt,
       P = std::move(probs)](Tape<S>& tp, int32_t id) {
        const Tensor<S>& g = tp.grad_acc(id);
        const Tensor<S>& Q2 = tp.val(iq);
        const Tensor<S>& K2 = tp.val(ik);
        const Tensor<S>& V2 = tp.val(iv);
        Tensor<S>& gq = tp.grad_acc(iq);
        Tensor<S>& gk = tp.grad_acc(ik);
        Tensor<S>& gv = tp.grad_acc(iv);
        std::vector<S> gp(nk), gm(nk);
        for (int64_t h = 0; h < heads; ++h) {
          const int64_t off = h * dh;
          for (int64_t i = 0; i < nq; ++i) {
            const S* pi = P.data() + (h * nq + i) * nk;
            const S* gi = g.data() + i * dm + off;
            // dV += p^T dO ; gP = dO V^T
            for (int64_t j = 0; j < nk; ++j) {
              const S* vj = V2.data() + j * dm + off;
              S* gvj = gv.data() + j * dm + off;
              S acc = 0;
              for (int64_t c = 0; c < dh; ++c) {
                gvj[c] += pi[j] * gi[c];
                acc += gi[c] * vj[c];
              }
              gp[j] = acc;
            }
            S dot = 0;
            for (int64_t j = 0; j < nk; ++j) dot += gp[j] * pi[j];
            for (int64_t j = 0; j < nk; ++j) gm[j] = pi[j] * (gp[j] - dot) * inv_sqrt;
            S* gqi = gq.data() + i * dm + off;
            const S* qi = Q2.data() + i * dm + off;
            for (int64_t j = 0; j < nk; ++j) {
              const S* kj = K2.data() + j * dm + off;
              S* gkj = gk.data() + j * dm + off;
              const S m = gm[j];
              for (int64_t c = 0; c < dh; ++c) {
                gqi[c] += m * kj[c];
                gkj[c] += m * qi[c];
              }
            }
          }
        }
      });
}

template <typename S>
Var<S> reshape(Var<S> a, Shape shape) {
  Tape<S>& t = *a.tape;
  Tensor<S> v = t.val(a).reshaped(shape);
  return t.push(std::move(v), [ia = a.id](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i];
  });
}

// column-wise mean over rows: [m x n] -> [n]
template <typename S>
Var<S> mean_rows(Var<S> a) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& A = t.val(a);
  if (A.rank() != 2) throw ShapeError("mean_rows expects a rank-2 tensor");
  const int64_t m = A.rows(), n = A.cols();
  Tensor<S> v({n});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) v[j] += A(i, j);
  for (int64_t j = 0; j < n; ++j) v[j] /= static_cast<S>(m);
  return t.push(std::move(v), [ia = a.id, m, n](Tape<S>& tp, int32_t id) {
    const Tensor<S>& g = tp.grad_acc(id);
    Tensor<S>& ga = tp.grad_acc(ia);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < n; ++j) ga(i, j) += g[j] / static_cast<S>(m);
  });
}

// cross-entropy of a fixed probability target against softmax(logits)
template <typename S>
Var<S> cross_entropy_logits(Var<S> logits, Tensor<S> target) {
  Tape<S>& t = *logits.tape;
  const S loss = cross_entropy_logits_val(t.val(logits), target);
  return t.push(
      Tensor<S>::scalar(loss),
      [il = logits.id, tg = std::move(target)](Tape<S>& tp, int32_t id) {
        const S g = tp.grad_acc(id)[0];
        const Tensor<S>& Z = tp.val(il);
        Tensor<S> p = softmax_axis(Z, Z.rank() - 1);
        S tsum = 0;
        for (int64_t i = 0; i < tg.numel(); ++i) tsum += tg[i];
        Tensor<S>& gz = tp.grad_acc(il);
        for (int64_t i = 0; i < gz.numel(); ++i)
          gz[i] += g * (p[i] * tsum - tg[i]);
      });
}

inline constexpr double kBceClamp = 1e-7;

// mean binary cross-entropy of fixed targets against probabilities,
// probabilities clamped away from 0 and 1
template <typename S>
Var<S> bce_mean(Var<S> probs, Tensor<S> target) {
  Tape<S>& t = *probs.tape;
  const Tensor<S>& P = t.val(probs);
  if (P.numel() != target.numel()) throw ShapeError("bce target length mismatch");
  const S c = static_cast<S>(kBceClamp);
  const int64_t n = P.numel();
  S loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const S p = std::min(std::max(P[i], c), S(1) - c);
    loss -= target[i] * std::log(p) + (S(1) - target[i]) * std::log(S(1) - p);
  }
  loss /= static_cast<S>(n);
  return t.push(
      Tensor<S>::scalar(loss),
      [ip = probs.id, tg = std::move(target), c, n](Tape<S>& tp, int32_t id) {
        const S g = tp.grad_acc(id)[0] / static_cast<S>(n);
        const Tensor<S>& P2 = tp.val(ip);
        Tensor<S>& gp = tp.grad_acc(ip);
        for (int64_t i = 0; i < n; ++i) {
          if (P2[i] <= c || P2[i] >= S(1) - c) continue;  // clamped: flat
          gp[i] += g * (-tg[i] / P2[i] + (S(1) - tg[i]) / (S(1) - P2[i]));
        }
      });
}

// cosine similarity of two vectors with epsilon-guarded norms
template <typename S>
Var<S> cosine_sim(Var<S> a, Var<S> b, S eps) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& A = t.val(a);
  const Tensor<S>& B = t.val(b);
  if (A.numel() != B.numel()) throw ShapeError("cosine_sim length mismatch");
  S dot = 0, na2 = 0, nb2 = 0;
  for (int64_t i = 0; i < A.numel(); ++i) {
    dot += A[i] * B[i];
    na2 += A[i] * A[i];
    nb2 += B[i] * B[i];
  }
  const S na = std::sqrt(na2), nb = std::sqrt(nb2);
  const S ma = std::max(na, eps), mb = std::max(nb, eps);
  const S cval = dot / (ma * mb);
  return t.push(
      Tensor<S>::scalar(cval),
      [ia = a.id, ib = b.id, eps](Tape<S>& tp, int32_t id) {
        const S g = tp.grad_acc(id)[0];
        const Tensor<S>& A2 = tp.val(ia);
        const Tensor<S>& B2 = tp.val(ib);
        S dot = 0, na2 = 0, nb2 = 0;
        for (int64_t i = 0; i < A2.numel(); ++i) {
          dot += A2[i] * B2[i];
          na2 += A2[i] * A2[i];
          nb2 += B2[i] * B2[i];
        }
        const S na = std::sqrt(na2), nb = std::sqrt(nb2);
        const S ma = std::max(na, eps), mb = std::max(nb, eps);
        const S cval = dot / (ma * mb);
        Tensor<S>& ga = tp.grad_acc(ia);
        Tensor<S>& gb = tp.grad_acc(ib);
        for (int64_t i = 0; i < A2.numel(); ++i) {
          S da = B2[i] / (ma * mb);
          if (na > eps) da -= cval * A2[i] / na2;
          S db = A2[i] / (ma * mb);
          if (nb > eps) db -= cval * B2[i] / nb2;
          ga[i] += g * da;
          gb[i] += g * db;
        }
      });
}

// sum of squared differences against a fixed target
template <typename S>
Var<S> sum_sq_diff(Var<S> a, Tensor<S> target) {
  Tape<S>& t = *a.tape;
  const Tensor<S>& A = t.val(a);
  if (A.numel() != target.numel())
    throw ShapeError("sum_sq_diff length mismatch");
  S loss = 0;
  for (int64_t i = 0; i < A.numel(); ++i) {
    const S d = A[i] - target[i];
    loss += d * d;
  }
  return t.push(Tensor<S>::scalar(loss),
                [ia = a.id, tg = std::move(target)](Tape<S>& tp, int32_t id) {
                  const S g = tp.grad_acc(id)[0];
                  const Tensor<S>& A2 = tp.val(ia);
                  Tensor<S>& ga = tp.grad_acc(ia);
                  for (int64_t i = 0; i < A2.numel(); ++i)
                    ga[i] += g * S(2) * (A2[i] - tg[i]);
                });
}

}  // namespace devias
