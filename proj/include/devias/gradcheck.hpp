#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "devias/optim.hpp"
#include "devias/tape.hpp"

namespace devias {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_param;
  int64_t worst_index = -1;
};

// Central-difference oracle against the tape. `build` constructs the loss
// graph on a fresh tape from the current parameter values; it must be
// deterministic. rel err = |analytic - fd| / max(1, |analytic|).
template <typename S, typename Build>
GradCheckResult finite_diff_check(ParamSet<S>& params, Build&& build,
                                  double eps = 1e-5) {
  params.zero_grads();
  {
    Tape<S> tape;
    Var<S> loss = build(tape);
    tape.backward(loss);
  }
  auto eval = [&]() -> double {
    Tape<S> tape;
    Var<S> loss = build(tape);
    return static_cast<double>(tape.val(loss).item());
  };
  GradCheckResult res;
  for (auto& p : params) {
    for (int64_t i = 0; i < p.value.numel(); ++i) {
      const S saved = p.value[i];
      p.value[i] = saved + static_cast<S>(eps);
      const double up = eval();
      p.value[i] = saved - static_cast<S>(eps);
      const double dn = eval();
      p.value[i] = saved;
      const double fd = (up - dn) / (2.0 * eps);
      const double an = static_cast<double>(p.grad[i]);
      const double rel = std::abs(an - fd) / std::max(1.0, std::abs(an));
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst_param = p.name;
        res.worst_index = i;
      }
    }
  }
  return res;
}

}  // namespace devias
