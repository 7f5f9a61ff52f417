#include <catch2/catch_amalgamated.hpp>

#include "devias/gradcheck.hpp"
#include "devias/objectives.hpp"
#include "testutil.hpp"

using devias::HeadConfig;
using devias::LossWeights;
using devias::one_hot;
using devias::ParamSet;
using devias::Rng;
using devias::SlotAssignment;
using devias::Tape;
using devias::Tensor;
using devias::Var;

namespace {

template <typename S>
devias::HeadParams<S> make_heads(ParamSet<S>& ps, HeadConfig cfg, uint64_t seed) {
  Rng rng(seed);
  return devias::build_heads(ps, cfg, "head", rng);
}

}  // namespace

TEST_CASE("unified head basics", "[objectives]") {
  HeadConfig cfg;
  cfg.dim = 8;
  ParamSet<float> ps;
  auto hp = make_heads(ps, cfg, 1);

  SECTION("zero slots and zero bias give zero logits, width Na+Ns") {
    std::fill(hp.psi_b->value.vec().begin(), hp.psi_b->value.vec().end(), 0.f);
    Tape<float> t;
    Var<float> logits = devias::unified_head(t.constant(Tensor<float>({2, 8})), hp);
    CHECK(t.val(logits).shape() == devias::Shape{2, 8});
    for (int64_t i = 0; i < t.val(logits).numel(); ++i)
      REQUIRE(t.val(logits)[i] == 0.f);
  }

  SECTION("logits are linear in the slots") {
    Rng rng(2);
    Tensor<float> s = testutil::random_tensor<float>({2, 8}, rng);
    Tape<float> t;
    Tensor<float> two_s = scale(s, 2.f);
    const Tensor<float>& l1 = t.val(devias::unified_head(t.constant(s), hp));
    const Tensor<float>& l2 = t.val(devias::unified_head(t.constant(two_s), hp));
    const Tensor<float>& l0 = t.val(devias::unified_head(t.constant(Tensor<float>({2, 8})), hp));
    for (int64_t i = 0; i < l1.numel(); ++i)
      REQUIRE(l2[i] - l0[i] == Catch::Approx(2.f * (l1[i] - l0[i])).margin(1e-4));
  }
}

TEST_CASE("disentangle loss closed forms", "[objectives]") {
  SlotAssignment assign;
  assign.k_action = 0;
  assign.k_scene = 1;
  const int64_t na = 4, ns = 4;

  SECTION("confident correct predictions approach zero") {
    Tensor<double> logits({2, 8});
    logits(0, 1) = 60.0;      // action slot predicts action class 1
    logits(1, na + 2) = 60.0; // scene slot predicts scene class 2
    Tape<double> t;
    Var<double> loss = devias::loss_disentangle(
        t.constant(logits), assign, one_hot<double>(1, na), one_hot<double>(2, ns));
    CHECK(t.val(loss).item() < 1e-6);
  }

  SECTION("uniform predictions give 2 ln 8") {
    Tape<double> t;
    Var<double> loss = devias::loss_disentangle(
        t.constant(Tensor<double>({2, 8})), assign, one_hot<double>(1, na),
        one_hot<double>(2, ns));
    CHECK(t.val(loss).item() == Catch::Approx(2.0 * std::log(8.0)).margin(1e-9));
  }

  SECTION("soft scene target floors at its entropy") {
    Tensor<double> y_s({4}, {0.5, 0.5, 0.0, 0.0});
    Tensor<double> logits({2, 8});
    logits(0, 0) = 60.0;
    // scene slot matches the soft target exactly: half mass on scenes 0 and 1
    logits(1, na + 0) = 30.0;
    logits(1, na + 1) = 30.0;
    for (int64_t c = 0; c < 8; ++c)
      if (c != na && c != na + 1) logits(1, c) = -30.0;
    Tape<double> t;
    Var<double> loss = devias::loss_disentangle(t.constant(logits), assign,
                                                one_hot<double>(0, na), y_s);
    CHECK(t.val(loss).item() == Catch::Approx(std::log(2.0)).margin(1e-6));
  }
}

TEST_CASE("attention guidance loss", "[objectives]") {
  Rng rng(3);
  Tensor<double> h = testutil::random_tensor<double>({10}, rng, 0.0, 1.0);
  Tensor<double> a({10, 2});
  for (int64_t i = 0; i < 10; ++i) {
    a(i, 1) = h[i];
    a(i, 0) = 1.0 - h[i];
  }

  SECTION("exact match gives zero") {
    Tape<double> t;
    Var<double> loss = devias::loss_attention_guidance(t.constant(a), 1, h);
    CHECK(t.val(loss).item() == 0.0);
  }

  SECTION("single-coordinate bump costs epsilon squared") {
    Tensor<double> bumped = a;
    bumped(4, 1) += 0.01;
    Tape<double> t;
    Var<double> loss = devias::loss_attention_guidance(t.constant(bumped), 1, h);
    CHECK(t.val(loss).item() == Catch::Approx(1e-4).margin(1e-12));
  }

  SECTION("all ones against all zeros costs NT") {
    Tape<double> t;
    Var<double> loss = devias::loss_attention_guidance(
        t.constant(Tensor<double>::ones({10, 2})), 0, Tensor<double>({10}));
    CHECK(t.val(loss).item() == 10.0);
  }

  SECTION("token count mismatch is a contract violation") {
    Tape<double> t;
    CHECK_THROWS_AS(
        devias::loss_attention_guidance(t.constant(a), 0, Tensor<double>({9})),
        devias::ShapeError);
  }
}

TEST_CASE("mask prediction loss closed forms", "[objectives]") {
  SECTION("binary-exact prediction is numerically zero") {
    Tensor<double> target({4}, {1.0, 0.0, 1.0, 0.0});
    Tape<double> t;
    Var<double> loss = devias::bce_mean(t.constant(target), target);
    CHECK(t.val(loss).item() < 1e-6);
  }

  SECTION("uniform half prediction costs ln 2 regardless of target") {
    Rng rng(4);
    Tensor<double> target = testutil::random_tensor<double>({6}, rng, 0.0, 1.0);
    Tape<double> t;
    Var<double> loss = devias::bce_mean(t.constant(Tensor<double>::full({6}, 0.5)), target);
    CHECK(t.val(loss).item() == Catch::Approx(std::log(2.0)).margin(1e-12));
  }

  SECTION("zero target reduces to mean of -log(1-p)") {
    Tensor<double> p({3}, {0.2, 0.4, 0.6});
    Tape<double> t;
    Var<double> loss = devias::bce_mean(t.constant(p), Tensor<double>({3}));
    const double expect =
        -(std::log(0.8) + std::log(0.6) + std::log(0.4)) / 3.0;
    CHECK(t.val(loss).item() == Catch::Approx(expect).margin(1e-12));
  }

  SECTION("phi path produces a finite loss and gradients") {
    HeadConfig cfg;
    cfg.dim = 8;
    cfg.mask_tokens = 4;
    ParamSet<double> ps;
    auto hp = make_heads(ps, cfg, 5);
    Rng rng(6);
    auto& slot = ps.add("slot", testutil::random_tensor<double>({8}, rng));
    Tensor<double> h_tilde = testutil::random_tensor<double>({4}, rng, 0.0, 1.0);
    auto build = [&](Tape<double>& t) {
      return devias::loss_mask_prediction(t.param(slot), hp, h_tilde);
    };
    auto res = devias::finite_diff_check(ps, build, 1e-5);
    CHECK(res.max_rel_err <= 1e-6);
  }
}

TEST_CASE("cosine diversity loss", "[objectives]") {
  SECTION("identical slots give one") {
    Tensor<double> s({2, 4}, {1, 2, 3, 4, 1, 2, 3, 4});
    Tape<double> t;
    CHECK(t.val(devias::loss_cosine(t.constant(s))).item() == Catch::Approx(1.0));
  }

  SECTION("orthogonal slots give zero") {
    Tensor<double> s({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0});
    Tape<double> t;
    CHECK(t.val(devias::loss_cosine(t.constant(s))).item() == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("three slots with one duplicate pair") {
    Tensor<double> s({3, 4}, {1, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0});
    Tape<double> t;
    CHECK(t.val(devias::loss_cosine(t.constant(s))).item() ==
          Catch::Approx(1.0 / 3.0).margin(1e-12));
  }

  SECTION("invariant to positive rescaling of a slot") {
    Rng rng(7);
    Tensor<double> s = testutil::random_tensor<double>({3, 5}, rng, 0.2, 1.0);
    Tensor<double> scaled = s;
    for (int64_t j = 0; j < 5; ++j) scaled(1, j) *= 7.5;
    Tape<double> t;
    const double a = t.val(devias::loss_cosine(t.constant(s))).item();
    const double b = t.val(devias::loss_cosine(t.constant(scaled))).item();
    CHECK(a == Catch::Approx(b).margin(1e-12));
  }
}

TEST_CASE("total loss combination", "[objectives]") {
  ParamSet<double> ps;
  Rng rng(8);
  auto& p = ps.add("p", testutil::random_tensor<double>({4}, rng));

  auto parts_of = [&](Tape<double>& t) {
    Var<double> v = t.param(p);
    devias::LossParts<double> parts;
    parts.disentangle = devias::sum(devias::mul(v, v));
    parts.attn_guidance = devias::sum(devias::gelu(v));
    parts.mask_prediction = devias::mean(devias::mul(v, v));
    parts.cosine = devias::sum(devias::sigmoid(v));
    return parts;
  };

  SECTION("zero weights reduce to the disentangle term") {
    Tape<double> t;
    auto parts = parts_of(t);
    LossWeights w{0.0, 0.0, 0.0};
    CHECK(t.val(devias::total_loss(parts, w)).item() ==
          Catch::Approx(t.val(parts.disentangle).item()));
  }

  SECTION("unit parts and unit weights sum to four") {
    Tape<double> t;
    devias::LossParts<double> ones{
        t.constant(Tensor<double>::scalar(1.0)), t.constant(Tensor<double>::scalar(1.0)),
        t.constant(Tensor<double>::scalar(1.0)), t.constant(Tensor<double>::scalar(1.0))};
    CHECK(t.val(devias::total_loss(ones, LossWeights{})).item() == 4.0);
  }

  SECTION("gradient is the weighted sum of part gradients") {
    LossWeights w{0.7, 1.3, 0.4};
    auto build = [&](Tape<double>& t) { return devias::total_loss(parts_of(t), w); };
    auto res = devias::finite_diff_check(ps, build, 1e-5);
    CHECK(res.max_rel_err <= 1e-6);
  }
}

TEST_CASE("mask tokenization follows the token order contract", "[objectives]") {
  devias::EncoderConfig cfg;
  cfg.patch = 2;
  cfg.frames = 4;
  cfg.height = 4;
  cfg.width = 4;
  // 2 temporal groups x 2x2 spatial grid = 8 tokens
  std::vector<uint8_t> mask(4 * 4 * 4, 0);
  // fill the top-left patch of frames 0 and 1 (temporal group 0)
  for (int f = 0; f < 2; ++f)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) mask[(f * 4 + y) * 4 + x] = 1;
  // half-fill the bottom-right patch of frames 2 and 3 (group 1, token 7)
  for (int f = 2; f < 4; ++f)
    for (int y = 2; y < 4; ++y) mask[(f * 4 + y) * 4 + 2] = 1;

  Tensor<double> h = devias::tokenize_mask<double>(mask, cfg);
  REQUIRE(h.numel() == 8);
  CHECK(h[0] == 1.0);   // group 0, patch (0,0) fully covered
  CHECK(h[1] == 0.0);
  CHECK(h[7] == 0.5);   // group 1, patch (1,1) half covered
  double total = 0;
  for (int64_t i = 0; i < 8; ++i) total += h[i];
  CHECK(total == Catch::Approx(1.5));

  Tensor<double> ht = devias::temporal_average_mask(h, cfg);
  REQUIRE(ht.numel() == 4);
  CHECK(ht[0] == 0.5);  // token (0,0): (1.0 + 0.0) / 2
  CHECK(ht[3] == 0.25);
}
