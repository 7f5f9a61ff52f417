#pragma once

#include <limits>
#include <vector>

#include "devias/errors.hpp"
#include "devias/tensor.hpp"

namespace devias {

struct SlotAssignment {
  int k_action = -1;
  int k_scene = -1;
  Tensor<float> cost;  // [K x 2]: column 0 action, column 1 scene
};

template <typename S>
Tensor<S> one_hot(int index, int64_t n) {
  Tensor<S> t({n});
  t[index] = S(1);
  return t;
}

// Zero-pad a label of length `len` into the unified Na+Ns space at `offset`.
template <typename S>
Tensor<S> pad_label(const Tensor<S>& label, int64_t offset, int64_t total) {
  if (label.numel() + offset > total) throw ShapeError("padded label overflows");
  Tensor<S> out({total});
  for (int64_t i = 0; i < label.numel(); ++i) out[offset + i] = label[i];
  return out;
}

// K x 2 cross-entropy cost between every slot's unified-head prediction and
// the zero-padded action / scene targets.
template <typename S>
Tensor<float> build_cost(const Tensor<S>& slot_logits, const Tensor<S>& y_action,
                         const Tensor<S>& y_scene) {
  const int64_t k = slot_logits.rows();
  const int64_t total = slot_logits.cols();
  const int64_t na = y_action.numel(), ns = y_scene.numel();
  if (na + ns != total)
    throw ShapeError("label widths do not sum to the unified head width");
  Tensor<S> pad_a = pad_label(y_action, 0, total);
  Tensor<S> pad_s = pad_label(y_scene, na, total);
  Tensor<float> cost({k, 2});
  for (int64_t i = 0; i < k; ++i) {
    Tensor<S> logits = row_of(slot_logits, i);
    cost(i, 0) = static_cast<float>(cross_entropy_logits_val(logits, pad_a));
    cost(i, 1) = static_cast<float>(cross_entropy_logits_val(logits, pad_s));
  }
  return cost;
}

// Minimum-cost injective assignment of the two supervision columns to slot
// rows. The K x 2 problem is solved exactly by enumerating ordered pairs;
// ties resolve to the lowest action row first, then the lowest scene row.
inline SlotAssignment hungarian(const Tensor<float>& cost) {
  if (cost.rank() != 2 || cost.cols() != 2)
    throw ShapeError("hungarian expects a [K x 2] cost matrix");
  const int64_t k = cost.rows();
  if (k < 2) throw UsageError("hungarian needs at least 2 slots");
  SlotAssignment out;
  out.cost = cost;
  double best = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = 0; j < k; ++j) {
      if (i == j) continue;
      const double total = static_cast<double>(cost(i, 0)) + cost(j, 1);
      if (total < best) {
        best = total;
        out.k_action = static_cast<int>(i);
        out.k_scene = static_cast<int>(j);
      }
    }
  return out;
}

// Classic O(n^3) Kuhn-Munkres on an n x m matrix with n >= m: assigns every
// column a distinct row, minimizing total cost. Returns row index per column.
inline std::vector<int> hungarian_general(const Tensor<float>& cost) {
  if (cost.rank() != 2) throw ShapeError("hungarian_general expects a matrix");
  const int64_t n = cost.rows(), m = cost.cols();
  if (n < m) throw UsageError("hungarian_general needs rows >= columns");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(m + 1), v(n + 1);
  std::vector<int> p(n + 1), way(n + 1);
  for (int64_t j = 1; j <= m; ++j) {
    p[0] = static_cast<int>(j);
    int i0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[i0] = 1;
      const int j0 = p[i0];
      double delta = kInf;
      int i1 = 0;
      for (int64_t i = 1; i <= n; ++i) {
        if (used[i]) continue;
        const double cur = cost(i - 1, j0 - 1) - u[j0] - v[i];
        if (cur < minv[i]) {
          minv[i] = cur;
          way[i] = i0;
        }
        if (minv[i] < delta) {
          delta = minv[i];
          i1 = static_cast<int>(i);
        }
      }
      for (int64_t i = 0; i <= n; ++i) {
        if (used[i]) {
          u[p[i]] += delta;
          v[i] -= delta;
        } else {
          minv[i] -= delta;
        }
      }
      i0 = i1;
    } while (p[i0] != 0);
    do {
      const int i1 = way[i0];
      p[i0] = p[i1];
      i0 = i1;
    } while (i0);
  }
  std::vector<int> row_of_col(m, -1);
  for (int64_t i = 1; i <= n; ++i)
    if (p[i] != 0) row_of_col[p[i] - 1] = static_cast<int>(i - 1);
  return row_of_col;
}

// Inference-time assignment: the action slot is the one whose peak probability
// in the action block is highest; the scene slot is the best remaining slot by
// scene-block peak. Ties resolve to the lower slot index.
template <typename S>
SlotAssignment assign_infer(const Tensor<S>& slot_probs, int64_t n_actions) {
  const int64_t k = slot_probs.rows();
  const int64_t total = slot_probs.cols();
  if (n_actions <= 0 || n_actions >= total)
    throw ShapeError("assign_infer: bad action block width");
  SlotAssignment out;
  out.cost = Tensor<float>({k, 2});
  for (int64_t i = 0; i < k; ++i) {
    S pa = slot_probs(i, 0), ps = slot_probs(i, n_actions);
    for (int64_t c = 1; c < n_actions; ++c) pa = std::max(pa, slot_probs(i, c));
    for (int64_t c = n_actions + 1; c < total; ++c) ps = std::max(ps, slot_probs(i, c));
    out.cost(i, 0) = -static_cast<float>(pa);
    out.cost(i, 1) = -static_cast<float>(ps);
  }
  for (int64_t i = 0; i < k; ++i)
    if (out.k_action < 0 || out.cost(i, 0) < out.cost(out.k_action, 0))
      out.k_action = static_cast<int>(i);
  for (int64_t i = 0; i < k; ++i) {
    if (i == out.k_action) continue;
    if (out.k_scene < 0 || out.cost(i, 1) < out.cost(out.k_scene, 1))
      out.k_scene = static_cast<int>(i);
  }
  return out;
}

}  // namespace devias
