#include <catch2/catch_amalgamated.hpp>
#include <limits>

#include "devias/matching.hpp"
#include "testutil.hpp"

using devias::assign_infer;
using devias::build_cost;
using devias::hungarian;
using devias::hungarian_general;
using devias::one_hot;
using devias::Rng;
using devias::SlotAssignment;
using devias::Tensor;

namespace {

// independent oracle: enumerate every injective (action row, scene row) pair
SlotAssignment brute_force(const Tensor<float>& cost) {
  SlotAssignment best;
  best.cost = cost;
  double best_total = std::numeric_limits<double>::infinity();
  for (int64_t i = 0; i < cost.rows(); ++i)
    for (int64_t j = 0; j < cost.rows(); ++j) {
      if (i == j) continue;
      const double total = static_cast<double>(cost(i, 0)) + cost(j, 1);
      if (total < best_total) {
        best_total = total;
        best.k_action = static_cast<int>(i);
        best.k_scene = static_cast<int>(j);
      }
    }
  return best;
}

double assignment_total(const Tensor<float>& cost, const SlotAssignment& a) {
  return static_cast<double>(cost(a.k_action, 0)) + cost(a.k_scene, 1);
}

}  // namespace

TEST_CASE("cost matrix closed forms", "[matching]") {
  const int64_t na = 4, ns = 4;

  SECTION("uniform logits cost ln(Na+Ns)") {
    Tensor<float> logits({2, na + ns});
    Tensor<float> y_a = one_hot<float>(1, na);
    Tensor<float> y_s = one_hot<float>(2, ns);
    Tensor<float> cost = build_cost(logits, y_a, y_s);
    for (int64_t k = 0; k < 2; ++k) {
      CHECK(cost(k, 0) == Catch::Approx(std::log(8.0)).margin(1e-6));
      CHECK(cost(k, 1) == Catch::Approx(std::log(8.0)).margin(1e-6));
    }
  }

  SECTION("confident correct prediction approaches zero cost") {
    Tensor<float> logits({2, na + ns});
    logits(0, 1) = 50.f;  // slot 0 nails action class 1
    Tensor<float> cost = build_cost(logits, one_hot<float>(1, na), one_hot<float>(0, ns));
    CHECK(cost(0, 0) < 1e-3);
    CHECK(cost(0, 1) > 1.0);
  }

  SECTION("soft scene target uses the definition") {
    Rng rng(3);
    Tensor<float> logits = testutil::random_tensor<float>({2, na + ns}, rng);
    Tensor<float> y_s({4}, {0.5f, 0.25f, 0.25f, 0.f});
    Tensor<float> cost = build_cost(logits, one_hot<float>(0, na), y_s);
    for (int64_t k = 0; k < 2; ++k) {
      Tensor<float> p = softmax_axis(row_of(logits, k), 0);
      double expect = 0;
      for (int64_t c = 0; c < ns; ++c)
        expect -= y_s[c] * std::log(static_cast<double>(p[na + c]));
      CHECK(cost(k, 1) == Catch::Approx(expect).margin(1e-5));
    }
  }

  SECTION("label width mismatch rejected") {
    Tensor<float> logits({2, 8});
    CHECK_THROWS_AS(build_cost(logits, one_hot<float>(0, 3), one_hot<float>(0, 4)),
                    devias::ShapeError);
  }
}

TEST_CASE("hungarian hand cases", "[matching]") {
  SECTION("diagonal zero") {
    Tensor<float> cost({2, 2}, {0, 1, 1, 0});
    SlotAssignment a = hungarian(cost);
    CHECK(a.k_action == 0);
    CHECK(a.k_scene == 1);
    CHECK(assignment_total(cost, a) == 0.0);
  }

  SECTION("cross assignment beats greedy") {
    Tensor<float> cost({2, 2}, {4, 1, 2, 3});
    SlotAssignment a = hungarian(cost);
    CHECK(a.k_action == 1);
    CHECK(a.k_scene == 0);
    CHECK(assignment_total(cost, a) == 3.0);
  }

  SECTION("three slots") {
    Tensor<float> cost({3, 2}, {5, 5, 1, 9, 9, 1});
    SlotAssignment a = hungarian(cost);
    CHECK(a.k_action == 1);
    CHECK(a.k_scene == 2);
    CHECK(assignment_total(cost, a) == 2.0);
  }

  SECTION("fewer than two slots rejected") {
    CHECK_THROWS_AS(hungarian(Tensor<float>({1, 2})), devias::UsageError);
  }
}

TEST_CASE("hungarian equals brute force with tie-breaks", "[matching]") {
  Rng rng(44);
  for (int k = 2; k <= 6; ++k) {
    for (int trial = 0; trial < 1000; ++trial) {
      Tensor<float> cost({k, 2});
      // quantized costs force frequent ties
      for (int64_t i = 0; i < cost.numel(); ++i)
        cost[i] = static_cast<float>(rng.uniform_int(5)) * 0.5f;
      SlotAssignment got = hungarian(cost);
      SlotAssignment want = brute_force(cost);
      REQUIRE(assignment_total(cost, got) == assignment_total(cost, want));
      REQUIRE(got.k_action == want.k_action);
      REQUIRE(got.k_scene == want.k_scene);
    }
  }
}

TEST_CASE("hungarian invariances", "[matching]") {
  Rng rng(45);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(4));
    Tensor<float> cost({k, 2});
    for (int64_t i = 0; i < cost.numel(); ++i)
      cost[i] = static_cast<float>(rng.uniform(0.0, 4.0));
    SlotAssignment base = hungarian(cost);

    // constant column shift preserves the argmin
    Tensor<float> shifted = cost;
    for (int64_t i = 0; i < k; ++i) shifted(i, 1) += 2.5f;
    SlotAssignment sh = hungarian(shifted);
    REQUIRE(sh.k_action == base.k_action);
    REQUIRE(sh.k_scene == base.k_scene);

    // row permutation permutes the result
    std::vector<int> perm(k);
    for (int i = 0; i < k; ++i) perm[i] = i;
    for (int i = k - 1; i > 0; --i)
      std::swap(perm[i], perm[rng.uniform_int(i + 1)]);
    Tensor<float> permuted({k, 2});
    for (int i = 0; i < k; ++i) {
      permuted(perm[i], 0) = cost(i, 0);
      permuted(perm[i], 1) = cost(i, 1);
    }
    SlotAssignment pm = hungarian(permuted);
    REQUIRE(assignment_total(permuted, pm) ==
            Catch::Approx(assignment_total(cost, base)).margin(1e-6));
  }
}

TEST_CASE("general hungarian matches brute force totals", "[matching]") {
  Rng rng(46);
  // square matrices: compare against exhaustive permutation search
  for (int n = 2; n <= 5; ++n) {
    for (int trial = 0; trial < 50; ++trial) {
      Tensor<float> cost({n, n});
      for (int64_t i = 0; i < cost.numel(); ++i)
        cost[i] = static_cast<float>(rng.uniform(0.0, 3.0));
      std::vector<int> rows = hungarian_general(cost);
      double got = 0;
      std::vector<char> used(n, 0);
      for (int j = 0; j < n; ++j) {
        REQUIRE(rows[j] >= 0);
        REQUIRE(!used[rows[j]]);
        used[rows[j]] = 1;
        got += cost(rows[j], j);
      }
      std::vector<int> perm(n);
      for (int i = 0; i < n; ++i) perm[i] = i;
      double best = std::numeric_limits<double>::infinity();
      do {
        double total = 0;
        for (int j = 0; j < n; ++j) total += cost(perm[j], j);
        best = std::min(best, total);
      } while (std::next_permutation(perm.begin(), perm.end()));
      REQUIRE(got == Catch::Approx(best).margin(1e-5));
    }
  }
  // rectangular K x 2 agrees with the pair solver's total
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 2 + static_cast<int>(rng.uniform_int(5));
    Tensor<float> cost({k, 2});
    for (int64_t i = 0; i < cost.numel(); ++i)
      cost[i] = static_cast<float>(rng.uniform(0.0, 3.0));
    std::vector<int> rows = hungarian_general(cost);
    SlotAssignment pair = hungarian(cost);
    const double got = cost(rows[0], 0) + cost(rows[1], 1);
    REQUIRE(rows[0] != rows[1]);
    REQUIRE(got == Catch::Approx(assignment_total(cost, pair)).margin(1e-5));
  }
}

TEST_CASE("inference assignment", "[matching]") {
  const int64_t na = 4;

  SECTION("one slot per block") {
    Tensor<float> probs({2, 8}, {0.7f, 0.1f, 0.05f, 0.05f, 0.025f, 0.025f, 0.025f, 0.025f,
                                 0.02f, 0.02f, 0.02f, 0.02f, 0.6f, 0.12f, 0.1f, 0.1f});
    SlotAssignment a = assign_infer(probs, na);
    CHECK(a.k_action == 0);
    CHECK(a.k_scene == 1);
  }

  SECTION("both peaked in the action block") {
    Tensor<float> probs({2, 8}, {0.5f, 0.1f, 0.1f, 0.1f, 0.05f, 0.05f, 0.05f, 0.05f,
                                 0.6f, 0.1f, 0.05f, 0.05f, 0.05f, 0.05f, 0.05f, 0.05f});
    SlotAssignment a = assign_infer(probs, na);
    CHECK(a.k_action == 1);  // higher action peak
    CHECK(a.k_scene == 0);
  }

  SECTION("exact tie goes to the lower index") {
    Tensor<float> probs({2, 8}, {0.5f, 0.1f, 0.1f, 0.1f, 0.05f, 0.05f, 0.05f, 0.05f,
                                 0.5f, 0.1f, 0.1f, 0.1f, 0.05f, 0.05f, 0.05f, 0.05f});
    SlotAssignment a = assign_infer(probs, na);
    CHECK(a.k_action == 0);
    CHECK(a.k_scene == 1);
  }
}
