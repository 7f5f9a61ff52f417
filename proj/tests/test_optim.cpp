#include <catch2/catch_amalgamated.hpp>

#include "devias/optim.hpp"
#include "testutil.hpp"

using devias::AdamWConfig;
using devias::cosine_lr;
using devias::OptState;
using devias::ParamSet;
using devias::Rng;
using devias::Tensor;

TEST_CASE("adamw closed forms", "[optim]") {
  SECTION("zero grad and zero decay leave params untouched") {
    ParamSet<double> ps;
    auto& p = ps.add("p", Tensor<double>({3}, {1.0, -2.0, 0.5}));
    AdamWConfig cfg;
    cfg.weight_decay = 0.0;
    OptState<double> opt(ps, cfg, {1.0});
    opt.step(ps, 0.1);
    CHECK(p.value[0] == 1.0);
    CHECK(p.value[1] == -2.0);
    CHECK(p.value[2] == 0.5);
  }

  SECTION("unit gradient with betas zero moves by the learning rate") {
    ParamSet<double> ps;
    auto& p = ps.add("p", Tensor<double>::scalar(3.0));
    p.grad[0] = 1.0;
    AdamWConfig cfg;
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.weight_decay = 0.0;
    OptState<double> opt(ps, cfg, {1.0});
    opt.step(ps, 0.25);
    CHECK(p.value[0] == Catch::Approx(3.0 - 0.25).margin(1e-8));
  }

  SECTION("decay-only step shrinks multiplicatively") {
    ParamSet<double> ps;
    auto& p = ps.add("p", Tensor<double>::scalar(2.0));
    AdamWConfig cfg;
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.weight_decay = 0.1;
    OptState<double> opt(ps, cfg, {1.0});
    opt.step(ps, 0.5);
    CHECK(p.value[0] == Catch::Approx(2.0 - 0.5 * 0.1 * 2.0));
  }

  SECTION("per-group multiplier scales the update") {
    ParamSet<double> ps;
    auto& a = ps.add("a", Tensor<double>::scalar(0.0), 0);
    auto& b = ps.add("b", Tensor<double>::scalar(0.0), 1);
    a.grad[0] = 1.0;
    b.grad[0] = 1.0;
    AdamWConfig cfg;
    cfg.beta1 = 0.0;
    cfg.beta2 = 0.0;
    cfg.weight_decay = 0.0;
    OptState<double> opt(ps, cfg, {1.0, 0.1});
    opt.step(ps, 1.0);
    CHECK(b.value[0] == Catch::Approx(0.1 * a.value[0]).margin(1e-12));
  }
}

TEST_CASE("adamw is deterministic", "[optim]") {
  Rng rng(77);
  Tensor<float> init = testutil::random_tensor<float>({16}, rng);
  Tensor<float> grad = testutil::random_tensor<float>({16}, rng);
  auto run = [&]() {
    ParamSet<float> ps;
    auto& p = ps.add("p", init);
    OptState<float> opt(ps, AdamWConfig{}, {1.0});
    for (int s = 0; s < 5; ++s) {
      p.grad = grad;
      opt.step(ps, 1e-3);
    }
    return p.value;
  };
  Tensor<float> a = run();
  Tensor<float> b = run();
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("cosine schedule", "[optim]") {
  const double base = 3e-4;
  CHECK(cosine_lr(0, 100, 1000, base) == 0.0);
  CHECK(cosine_lr(100, 100, 1000, base) == Catch::Approx(base));
  // halfway through the decay phase
  CHECK(cosine_lr(550, 100, 1000, base) == Catch::Approx(base / 2).margin(1e-9));
  CHECK(cosine_lr(1000, 100, 1000, base) == Catch::Approx(0.0).margin(1e-18));
  CHECK_THROWS_AS(cosine_lr(2000, 100, 1000, base), devias::UsageError);
  CHECK_THROWS_AS(cosine_lr(10, 1000, 100, base), devias::UsageError);
}
