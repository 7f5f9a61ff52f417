#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "devias/errors.hpp"
#include "devias/rng.hpp"

namespace devias {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major n-d array. Rank 0 is a scalar. No views, no strides:
// every op materializes its result.
template <typename S>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)), data_(shape_numel(shape_), S(0)) {
    check_shape();
  }

  Tensor(Shape shape, std::vector<S> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape();
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_str(shape_));
  }

  static Tensor scalar(S v) { return Tensor({}, {v}); }

  static Tensor full(Shape shape, S v) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), v);
    return t;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor ones(Shape shape) { return full(std::move(shape), S(1)); }

  static Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<S>(rng.normal(0.0, stddev));
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, double lo = 0.0,
                             double hi = 1.0) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor trunc_normal(Shape shape, Rng& rng, double stddev) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_) v = static_cast<S>(rng.trunc_normal(stddev));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  int64_t extent(int64_t axis) const { return shape_[axis]; }

  // 2-d helpers; most of the model lives in matrices
  int64_t rows() const { return shape_[0]; }
  int64_t cols() const { return shape_[1]; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }
  std::vector<S>& vec() { return data_; }
  const std::vector<S>& vec() const { return data_; }

  S& operator[](int64_t i) { return data_[i]; }
  S operator[](int64_t i) const { return data_[i]; }
  S& operator()(int64_t i, int64_t j) { return data_[i * shape_[1] + j]; }
  S operator()(int64_t i, int64_t j) const { return data_[i * shape_[1] + j]; }

  S item() const {
    if (numel() != 1)
      throw ShapeError("item() on tensor with " + std::to_string(numel()) +
                       " elements");
    return data_[0];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    for (S v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel())
      throw ShapeError("reshape " + shape_str(shape_) + " -> " +
                       shape_str(shape) + " changes element count");
    return Tensor(std::move(shape), data_);
  }

  template <typename T>
  Tensor<T> cast() const {
    std::vector<T> d(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<T>(data_[i]);
    Tensor<T> out;
    out = Tensor<T>(shape_, std::move(d));
    return out;
  }

 private:
  void check_shape() const {
    for (int64_t e : shape_)
      if (e <= 0)
        throw ShapeError("non-positive extent in shape " + shape_str(shape_));
  }

  Shape shape_;
  std::vector<S> data_;
};

// ---------------------------------------------------------------------------
// raw kernels (value math, no gradient tracking)
// ---------------------------------------------------------------------------

// c[m x n] += a[m x k] * b[k x n]. Register-tiled: a 4 x 32 output block
// accumulates across the full k extent before touching memory.
template <typename S>
void gemm_acc(const S* __restrict a, const S* __restrict b, S* __restrict c,
              int64_t m, int64_t k, int64_t n) {
  constexpr int64_t JT = 32, IT = 4;
  int64_t j0 = 0;
  for (; j0 + JT <= n; j0 += JT) {
    int64_t i0 = 0;
    for (; i0 + IT <= m; i0 += IT) {
      S acc[IT][JT] = {};
      for (int64_t p = 0; p < k; ++p) {
        const S* bp = b + p * n + j0;
        for (int64_t r = 0; r < IT; ++r) {
          const S s = a[(i0 + r) * k + p];
          for (int64_t j = 0; j < JT; ++j) acc[r][j] += s * bp[j];
        }
      }
      for (int64_t r = 0; r < IT; ++r) {
        S* cr = c + (i0 + r) * n + j0;
        for (int64_t j = 0; j < JT; ++j) cr[j] += acc[r][j];
      }
    }
    for (; i0 < m; ++i0) {
      S acc[JT] = {};
      for (int64_t p = 0; p < k; ++p) {
        const S s = a[i0 * k + p];
        const S* bp = b + p * n + j0;
        for (int64_t j = 0; j < JT; ++j) acc[j] += s * bp[j];
      }
      S* cr = c + i0 * n + j0;
      for (int64_t j = 0; j < JT; ++j) cr[j] += acc[j];
    }
  }
  if (j0 < n) {
    for (int64_t i = 0; i < m; ++i) {
      const S* ai = a + i * k;
      S* ci = c + i * n;
      for (int64_t p = 0; p < k; ++p) {
        const S s = ai[p];
        const S* bp = b + p * n;
        for (int64_t j = j0; j < n; ++j) ci[j] += s * bp[j];
      }
    }
  }
}

// c[m x k] += a[m x n] * b[k x n]^T. Transposing b first turns the inner
// loop into the same contiguous accumulate form as gemm_acc, which
// vectorizes; the dot-product form does not.
template <typename S>
void gemm_nt_acc(const S* __restrict a, const S* __restrict b, S* __restrict c,
                 int64_t m, int64_t n, int64_t k) {
  static thread_local std::vector<S> scratch;
  scratch.resize(static_cast<size_t>(n) * k);
  S* bt = scratch.data();
  for (int64_t p = 0; p < k; ++p)
    for (int64_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  gemm_acc(a, bt, c, m, n, k);
}

// c[k x n] += a[m x k]^T * b[m x n], via an explicit transpose of a.
template <typename S>
void gemm_tn_acc(const S* __restrict a, const S* __restrict b, S* __restrict c,
                 int64_t m, int64_t k, int64_t n) {
  static thread_local std::vector<S> scratch;
  scratch.resize(static_cast<size_t>(m) * k);
  S* at = scratch.data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  gemm_acc(at, b, c, k, m, n);
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul expects rank-2 tensors, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  if (a.cols() != b.rows())
    throw ShapeError("matmul inner extents disagree: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  Tensor<S> c({a.rows(), b.cols()});
  gemm_acc(a.data(), b.data(), c.data(), a.rows(), a.cols(), b.cols());
  return c;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  if (a.rank() != 2) throw ShapeError("transpose expects a rank-2 tensor");
  Tensor<S> t({a.cols(), a.rows()});
  for (int64_t i = 0; i < a.rows(); ++i)
    for (int64_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

namespace detail {

// Iterate fibers along `axis`: outer runs over all positions with the axis
// removed, fiber elements are `stride` apart starting at the base offset.
template <typename S, typename F>
void for_each_fiber(const Shape& shape, int64_t axis, F&& fn) {
  int64_t stride = 1;
  for (int64_t d = axis + 1; d < static_cast<int64_t>(shape.size()); ++d)
    stride *= shape[d];
  const int64_t len = shape[axis];
  int64_t outer = 1, inner = 1;
  for (int64_t d = 0; d < axis; ++d) outer *= shape[d];
  for (int64_t d = axis + 1; d < static_cast<int64_t>(shape.size()); ++d)
    inner *= shape[d];
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t i = 0; i < inner; ++i) fn(o * len * stride + i, stride, len);
}

}  // namespace detail

template <typename S>
Tensor<S> softmax_axis(const Tensor<S>& t, int64_t axis) {
  if (axis < 0 || axis >= t.rank())
    throw ShapeError("softmax axis " + std::to_string(axis) +
                     " out of bounds for " + shape_str(t.shape()));
  Tensor<S> out(t.shape());
  const S* x = t.data();
  S* y = out.data();
  detail::for_each_fiber<S>(
      t.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
        S mx = x[base];
        for (int64_t i = 1; i < len; ++i) mx = std::max(mx, x[base + i * stride]);
        S sum = 0;
        for (int64_t i = 0; i < len; ++i) {
          const S e = std::exp(x[base + i * stride] - mx);
          y[base + i * stride] = e;
          sum += e;
        }
        const S inv = S(1) / sum;
        for (int64_t i = 0; i < len; ++i) y[base + i * stride] *= inv;
      });
  return out;
}

template <typename S>
Tensor<S> l2_normalize_axis(const Tensor<S>& t, int64_t axis, S eps) {
  if (axis < 0 || axis >= t.rank())
    throw ShapeError("l2_normalize axis out of bounds");
  Tensor<S> out(t.shape());
  const S* x = t.data();
  S* y = out.data();
  detail::for_each_fiber<S>(
      t.shape(), axis, [&](int64_t base, int64_t stride, int64_t len) {
        S sq = 0;
        for (int64_t i = 0; i < len; ++i) {
          const S v = x[base + i * stride];
          sq += v * v;
        }
        const S inv = S(1) / std::max(std::sqrt(sq), eps);
        for (int64_t i = 0; i < len; ++i) y[base + i * stride] = x[base + i * stride] * inv;
      });
  return out;
}

inline constexpr double kGeluCubic = 0.044715;
inline constexpr double kSqrt2OverPi = 0.7978845608028654;
inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kL2NormEps = 1e-8;

template <typename S>
S gelu_scalar(S x) {
  const S u = static_cast<S>(kSqrt2OverPi) * (x + static_cast<S>(kGeluCubic) * x * x * x);
  return S(0.5) * x * (S(1) + std::tanh(u));
}

template <typename S>
S gelu_grad_scalar(S x) {
  const S c = static_cast<S>(kGeluCubic);
  const S a = static_cast<S>(kSqrt2OverPi);
  const S u = a * (x + c * x * x * x);
  const S th = std::tanh(u);
  const S sech2 = S(1) - th * th;
  return S(0.5) * (S(1) + th) + S(0.5) * x * sech2 * a * (S(1) + S(3) * c * x * x);
}

template <typename S>
Tensor<S> gelu(const Tensor<S>& t) {
  Tensor<S> out(t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) out[i] = gelu_scalar(t[i]);
  return out;
}

// Normalizes the last axis to zero mean / unit variance, then applies the
// per-feature affine. Biased variance (divide by D), like the usual layer norm.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& t, const Tensor<S>& gain,
                     const Tensor<S>& bias, S eps) {
  const int64_t d = t.shape().back();
  if (gain.numel() != d || bias.numel() != d)
    throw ShapeError("layer_norm affine params must have length " +
                     std::to_string(d));
  Tensor<S> out(t.shape());
  const int64_t n = t.numel() / d;
  for (int64_t r = 0; r < n; ++r) {
    const S* x = t.data() + r * d;
    S* y = out.data() + r * d;
    S mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += x[j];
    mean /= static_cast<S>(d);
    S var = 0;
    for (int64_t j = 0; j < d; ++j) {
      const S c = x[j] - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    const S rstd = S(1) / std::sqrt(var + eps);
    for (int64_t j = 0; j < d; ++j)
      y[j] = (x[j] - mean) * rstd * gain[j] + bias[j];
  }
  return out;
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b))
    throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  Tensor<S> c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] + b[i];
  return c;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S s) {
  Tensor<S> c(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) c[i] = a[i] * s;
  return c;
}

template <typename S>
S sum(const Tensor<S>& a) {
  S acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a[i];
  return acc;
}

template <typename S>
Tensor<S> row_of(const Tensor<S>& a, int64_t i) {
  Tensor<S> r({a.cols()});
  for (int64_t j = 0; j < a.cols(); ++j) r[j] = a(i, j);
  return r;
}

template <typename S>
Tensor<S> col_of(const Tensor<S>& a, int64_t j) {
  Tensor<S> c({a.rows()});
  for (int64_t i = 0; i < a.rows(); ++i) c[i] = a(i, j);
  return c;
}

// cross-entropy of a probability target against softmax(logits)
template <typename S>
S cross_entropy_logits_val(const Tensor<S>& logits, const Tensor<S>& target) {
  if (logits.numel() != target.numel())
    throw ShapeError("cross entropy dimension mismatch");
  const int64_t n = logits.numel();
  S mx = logits[0];
  for (int64_t i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  S lse = 0;
  for (int64_t i = 0; i < n; ++i) lse += std::exp(logits[i] - mx);
  lse = std::log(lse) + mx;
  S loss = 0;
  for (int64_t i = 0; i < n; ++i) loss -= target[i] * (logits[i] - lse);
  return loss;
}

}  // namespace devias
