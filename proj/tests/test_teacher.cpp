#include <catch2/catch_amalgamated.hpp>

#include "devias/teacher.hpp"
#include "devias/world.hpp"
#include "testutil.hpp"

using devias::EncoderConfig;
using devias::Teacher;
using devias::TeacherHyper;
using devias::VideoClip;
using devias::WorldConfig;

namespace {

struct TeacherFixture {
  WorldConfig world;
  std::vector<VideoClip> train, val;
  Teacher<float> teacher;
};

TeacherFixture& fixture() {
  static TeacherFixture* fx = [] {
    auto* f = new TeacherFixture;
    f->train = devias::make_scene_only_set(f->world, 240, devias::worldtag::kTeacherTrain);
    f->val = devias::make_scene_only_set(f->world, 120, devias::worldtag::kTeacherVal);
    EncoderConfig enc;  // the desk-scale teacher: reduced encoder, depth 2
    enc.dim = 32;
    enc.heads = 4;
    enc.depth = 2;
    f->teacher = devias::build_teacher<float>(enc, f->world.n_scenes, 3);
    TeacherHyper hyper;
    hyper.epochs = 12;
    devias::train_scene_teacher(f->teacher, f->train, hyper, 3);
    return f;
  }();
  return *fx;
}

}  // namespace

TEST_CASE("untrained teacher refuses to label", "[teacher]") {
  EncoderConfig enc;
  enc.dim = 16;
  enc.depth = 1;
  Teacher<float> t = devias::build_teacher<float>(enc, 4, 1);
  WorldConfig w;
  VideoClip clip = devias::generate_scene_only_clip(w, 0, 9);
  CHECK_THROWS_AS(devias::teacher_soft_label(t, clip), devias::UsageError);
}

TEST_CASE("teacher separates scene families", "[teacher]") {
  TeacherFixture& fx = fixture();
  const double acc = devias::teacher_top1(fx.teacher, fx.val);
  INFO("held-out scene-only top-1 " << acc);
  CHECK(acc >= 0.95);
}

TEST_CASE("soft labels are proper distributions and frozen", "[teacher]") {
  TeacherFixture& fx = fixture();
  const VideoClip& clip = fx.val[0];
  devias::Tensor<float> a = devias::teacher_soft_label(fx.teacher, clip);
  devias::Tensor<float> b = devias::teacher_soft_label(fx.teacher, clip);
  double total = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    total += a[i];
    REQUIRE(a[i] >= 0.f);
    REQUIRE(a[i] == b[i]);  // identical clip, identical label
  }
  CHECK(total == Catch::Approx(1.0).margin(1e-6));
}

TEST_CASE("teacher recognizes scenes behind sprites above chance", "[teacher]") {
  TeacherFixture& fx = fixture();
  int64_t hits = 0;
  const int n = 80;
  for (int i = 0; i < n; ++i) {
    VideoClip clip = devias::generate_clip(fx.world, i % 4, (i / 7) % 4, 88000 + i);
    devias::Tensor<float> probs = devias::teacher_soft_label(fx.teacher, clip);
    int best = 0;
    for (int c = 1; c < 4; ++c)
      if (probs[c] > probs[best]) best = c;
    hits += best == clip.scene_id;
  }
  const double acc = static_cast<double>(hits) / n;
  INFO("teacher top-1 on sprite-bearing clips " << acc);
  CHECK(acc > 0.5);  // far above the 0.25 chance level
}
