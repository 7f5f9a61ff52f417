#include <catch2/catch_amalgamated.hpp>

#include "devias/gradcheck.hpp"
#include "devias/tape.hpp"
#include "testutil.hpp"

using devias::finite_diff_check;
using devias::ParamSet;
using devias::Rng;
using devias::Tape;
using devias::Tensor;
using devias::Var;

namespace {

// Reduce an op output to a scalar with fixed random weights so every output
// coordinate contributes to the checked gradient.
Var<double> weighted(Tape<double>& t, Var<double> v, const Tensor<double>& w) {
  return devias::sum(devias::mul(v, t.constant(w)));
}

template <typename Setup>
void run_fd_trials(const char* op, int trials, Setup setup) {
  Rng rng(devias::mix64(std::hash<std::string>{}(op)));
  for (int i = 0; i < trials; ++i) {
    ParamSet<double> ps;
    auto build = setup(ps, rng);
    auto res = finite_diff_check(ps, build, 1e-5);
    INFO(op << " trial " << i << " worst param " << res.worst_param << "["
            << res.worst_index << "]");
    REQUIRE(res.max_rel_err <= 1e-6);
  }
}

int64_t rdim(Rng& rng, int64_t lo = 1, int64_t hi = 5) {
  return lo + static_cast<int64_t>(rng.uniform_int(hi - lo + 1));
}

}  // namespace

TEST_CASE("backward basics", "[autodiff]") {
  ParamSet<double> ps;
  auto& p = ps.add("p", Tensor<double>({2}, {1.0, 2.0}));

  SECTION("sum gives ones") {
    Tape<double> t;
    t.backward(devias::sum(t.param(p)));
    CHECK(p.grad[0] == 1.0);
    CHECK(p.grad[1] == 1.0);
  }

  SECTION("sum of squares") {
    Tape<double> t;
    Var<double> v = t.param(p);
    t.backward(devias::sum(devias::mul(v, v)));
    CHECK(p.grad[0] == Catch::Approx(2.0));
    CHECK(p.grad[1] == Catch::Approx(4.0));
  }

  SECTION("fan-out accumulates") {
    Tape<double> t;
    Var<double> v = t.param(p);
    t.backward(devias::add(devias::sum(v), devias::sum(v)));
    CHECK(p.grad[0] == 2.0);
    CHECK(p.grad[1] == 2.0);
  }

  SECTION("consumed tape rejects second backward") {
    Tape<double> t;
    Var<double> loss = devias::sum(t.param(p));
    t.backward(loss);
    CHECK_THROWS_AS(t.backward(loss), devias::UsageError);
  }

  SECTION("non-scalar loss rejected") {
    Tape<double> t;
    CHECK_THROWS_AS(t.backward(t.param(p)), devias::UsageError);
  }
}

TEST_CASE("matmul gradient matches ones times B transpose", "[autodiff]") {
  Rng rng(21);
  ParamSet<double> ps;
  auto& a = ps.add("a", testutil::random_tensor<double>({3, 4}, rng));
  Tensor<double> b = testutil::random_tensor<double>({4, 2}, rng);

  auto build = [&](Tape<double>& t) {
    return devias::sum(devias::matmul(t.param(a), t.constant(b)));
  };
  auto res = finite_diff_check(ps, build, 1e-5);
  CHECK(res.max_rel_err <= 1e-6);

  // closed form: d/dA sum(A B) = ones * B^T
  for (int64_t i = 0; i < 3; ++i)
    for (int64_t k = 0; k < 4; ++k) {
      double expect = 0;
      for (int64_t j = 0; j < 2; ++j) expect += b(k, j);
      CHECK(a.grad(i, k) == Catch::Approx(expect).margin(1e-12));
    }
}

TEST_CASE("backward is linear in the loss", "[autodiff]") {
  Rng rng(31);
  Tensor<double> init = testutil::random_tensor<double>({4}, rng);
  auto grad_of = [&](double ca, double cb) {
    ParamSet<double> ps;
    auto& p = ps.add("p", init);
    Tape<double> t;
    Var<double> v = t.param(p);
    Var<double> f = devias::sum(devias::mul(v, v));
    Var<double> g = devias::sum(devias::gelu(v));
    t.backward(devias::add(devias::scale(f, ca), devias::scale(g, cb)));
    return p.grad;
  };
  Tensor<double> gf = grad_of(1.0, 0.0);
  Tensor<double> gg = grad_of(0.0, 1.0);
  Tensor<double> mix = grad_of(2.5, -1.5);
  for (int64_t i = 0; i < 4; ++i)
    CHECK(mix[i] == Catch::Approx(2.5 * gf[i] - 1.5 * gg[i]).margin(1e-12));
}

TEST_CASE("finite diff oracle on closed forms", "[autodiff]") {
  SECTION("quadratic loss is machine accurate") {
    Rng rng(41);
    ParamSet<double> ps;
    auto& p = ps.add("p", testutil::random_tensor<double>({6}, rng));
    auto build = [&](Tape<double>& t) {
      Var<double> v = t.param(p);
      return devias::sum(devias::mul(v, v));
    };
    auto res = finite_diff_check(ps, build, 1e-5);
    CHECK(res.max_rel_err <= 1e-8);
  }

  SECTION("constant loss gives zero error and zero grads") {
    ParamSet<double> ps;
    auto& p = ps.add("p", Tensor<double>({3}, {1.0, 2.0, 3.0}));
    auto build = [&](Tape<double>& t) {
      (void)t.param(p);
      return t.constant(Tensor<double>::scalar(5.0));
    };
    auto res = finite_diff_check(ps, build, 1e-5);
    CHECK(res.max_rel_err == 0.0);
    CHECK(p.grad[0] == 0.0);
  }
}

TEST_CASE("per-op gradients match finite differences", "[autodiff][fdsweep]") {
  SECTION("matmul") {
    run_fd_trials("matmul", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng), k = rdim(rng), n = rdim(rng);
      auto& a = ps.add("a", testutil::random_tensor<double>({m, k}, rng));
      auto& b = ps.add("b", testutil::random_tensor<double>({k, n}, rng));
      Tensor<double> w = testutil::random_tensor<double>({m, n}, rng);
      return [&a, &b, w](Tape<double>& t) {
        return weighted(t, devias::matmul(t.param(a), t.param(b)), w);
      };
    });
  }

  SECTION("transpose") {
    run_fd_trials("transpose", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng), n = rdim(rng);
      auto& a = ps.add("a", testutil::random_tensor<double>({m, n}, rng));
      Tensor<double> w = testutil::random_tensor<double>({n, m}, rng);
      return [&a, w](Tape<double>& t) {
        return weighted(t, devias::transpose(t.param(a)), w);
      };
    });
  }

  SECTION("elementwise add sub mul scale") {
    run_fd_trials("elementwise", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng), n = rdim(rng);
      auto& a = ps.add("a", testutil::random_tensor<double>({m, n}, rng));
      auto& b = ps.add("b", testutil::random_tensor<double>({m, n}, rng));
      Tensor<double> w = testutil::random_tensor<double>({m, n}, rng);
      const double s = rng.uniform(-2.0, 2.0);
      return [&a, &b, w, s](Tape<double>& t) {
        Var<double> va = t.param(a), vb = t.param(b);
        Var<double> expr = devias::add(
            devias::scale(devias::mul(va, vb), s), devias::sub(va, vb));
        return weighted(t, expr, w);
      };
    });
  }

  SECTION("add_rowvec") {
    run_fd_trials("add_rowvec", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng), n = rdim(rng);
      auto& a = ps.add("a", testutil::random_tensor<double>({m, n}, rng));
      auto& v = ps.add("v", testutil::random_tensor<double>({n}, rng));
      Tensor<double> w = testutil::random_tensor<double>({m, n}, rng);
      return [&a, &v, w](Tape<double>& t) {
        return weighted(t, devias::add_rowvec(t.param(a), t.param(v)), w);
      };
    });
  }

  SECTION("gelu and sigmoid") {
    run_fd_trials("gelu_sigmoid", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t n = rdim(rng, 1, 8);
      auto& a = ps.add("a", testutil::random_tensor<double>({n}, rng, -3.0, 3.0));
      Tensor<double> w = testutil::random_tensor<double>({n}, rng);
      Tensor<double> w2 = testutil::random_tensor<double>({n}, rng);
      return [&a, w, w2](Tape<double>& t) {
        Var<double> v = t.param(a);
        return devias::add(weighted(t, devias::gelu(v), w),
                           weighted(t, devias::sigmoid(v), w2));
      };
    });
  }

  SECTION("softmax_axis") {
    run_fd_trials("softmax", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng), n = rdim(rng);
      const int64_t axis = rng.uniform_int(2);
      auto& a = ps.add("a", testutil::random_tensor<double>({m, n}, rng, -2.0, 2.0));
      Tensor<double> w = testutil::random_tensor<double>({m, n}, rng);
      return [&a, w, axis](Tape<double>& t) {
        return weighted(t, devias::softmax_axis(t.param(a), axis), w);
      };
    });
  }

  SECTION("l2_normalize_axis away from the eps floor") {
    run_fd_trials("l2norm", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng), n = rdim(rng);
      const int64_t axis = rng.uniform_int(2);
      Tensor<double> init = testutil::random_tensor<double>({m, n}, rng, 0.3, 1.0);
      auto& a = ps.add("a", init);
      Tensor<double> w = testutil::random_tensor<double>({m, n}, rng);
      return [&a, w, axis](Tape<double>& t) {
        return weighted(t, devias::l2_normalize_axis(t.param(a), axis, 1e-8), w);
      };
    });
  }

  SECTION("l2_normalize_axis inside the eps floor") {
    run_fd_trials("l2norm_floor", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t n = rdim(rng, 2, 5);
      auto& a = ps.add("a", testutil::random_tensor<double>({n}, rng, -0.1, 0.1));
      Tensor<double> w = testutil::random_tensor<double>({n}, rng);
      return [&a, w](Tape<double>& t) {
        // eps far above any reachable norm keeps FD inside the floor branch
        return weighted(t, devias::l2_normalize_axis(t.param(a), 0, 100.0), w);
      };
    });
  }

  SECTION("layer_norm") {
    run_fd_trials("layer_norm", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng), n = rdim(rng, 2, 6);
      auto& a = ps.add("a", testutil::random_tensor<double>({m, n}, rng));
      auto& g = ps.add("g", testutil::random_tensor<double>({n}, rng, 0.5, 1.5));
      auto& b = ps.add("b", testutil::random_tensor<double>({n}, rng));
      Tensor<double> w = testutil::random_tensor<double>({m, n}, rng);
      return [&a, &g, &b, w](Tape<double>& t) {
        return weighted(
            t, devias::layer_norm(t.param(a), t.param(g), t.param(b), 1e-5), w);
      };
    });
  }

  SECTION("attention_heads") {
    run_fd_trials("attention", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t heads = 1 + static_cast<int64_t>(rng.uniform_int(2));
      const int64_t dh = rdim(rng, 1, 3);
      const int64_t dm = heads * dh;
      const int64_t nq = rdim(rng, 1, 4), nk = rdim(rng, 1, 4);
      auto& q = ps.add("q", testutil::random_tensor<double>({nq, dm}, rng));
      auto& k = ps.add("k", testutil::random_tensor<double>({nk, dm}, rng));
      auto& v = ps.add("v", testutil::random_tensor<double>({nk, dm}, rng));
      Tensor<double> w = testutil::random_tensor<double>({nq, dm}, rng);
      return [&q, &k, &v, w, heads](Tape<double>& t) {
        return weighted(
            t, devias::attention_heads(t.param(q), t.param(k), t.param(v), heads),
            w);
      };
    });
  }

  SECTION("cross_entropy_logits") {
    run_fd_trials("ce", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t n = rdim(rng, 2, 8);
      auto& z = ps.add("z", testutil::random_tensor<double>({n}, rng, -2.0, 2.0));
      Tensor<double> target =
          softmax_axis(testutil::random_tensor<double>({n}, rng, -1.0, 1.0), 0);
      const double s = rng.uniform(0.5, 2.0);
      return [&z, target, s](Tape<double>& t) {
        return devias::scale(devias::cross_entropy_logits(t.param(z), target), s);
      };
    });
  }

  SECTION("bce_mean") {
    run_fd_trials("bce", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t n = rdim(rng, 1, 8);
      auto& p = ps.add("p", testutil::random_tensor<double>({n}, rng, 0.15, 0.85));
      Tensor<double> target = testutil::random_tensor<double>({n}, rng, 0.0, 1.0);
      return [&p, target](Tape<double>& t) {
        return devias::bce_mean(t.param(p), target);
      };
    });
  }

  SECTION("cosine_sim") {
    run_fd_trials("cosine", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t n = rdim(rng, 2, 8);
      auto& a = ps.add("a", testutil::random_tensor<double>({n}, rng, 0.3, 1.0));
      auto& b = ps.add("b", testutil::random_tensor<double>({n}, rng, 0.3, 1.0));
      return [&a, &b](Tape<double>& t) {
        return devias::cosine_sim(t.param(a), t.param(b), 1e-8);
      };
    });
  }

  SECTION("row col concat sum_sq_diff mean") {
    run_fd_trials("structure", 100, [](ParamSet<double>& ps, Rng& rng) {
      const int64_t m = rdim(rng, 2, 5), n = rdim(rng, 2, 5);
      auto& a = ps.add("a", testutil::random_tensor<double>({m, n}, rng));
      auto& b = ps.add("b", testutil::random_tensor<double>({2, n}, rng));
      const int64_t ri = rng.uniform_int(m), ci = rng.uniform_int(n);
      Tensor<double> target = testutil::random_tensor<double>({m + 2}, rng);
      Tensor<double> w = testutil::random_tensor<double>({n}, rng);
      return [&a, &b, ri, ci, target, w](Tape<double>& t) {
        Var<double> va = t.param(a), vb = t.param(b);
        Var<double> cat = devias::concat_rows(va, vb);
        Var<double> loss1 = devias::sum_sq_diff(devias::col(cat, ci), target);
        Var<double> loss2 = weighted(t, devias::row(va, ri), w);
        return devias::add(devias::add(loss1, loss2), devias::mean(devias::mul(va, va)));
      };
    });
  }
}
