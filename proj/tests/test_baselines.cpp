#include <catch2/catch_amalgamated.hpp>

#include "devias/model.hpp"
#include "devias/pipeline.hpp"
#include "testutil.hpp"

using devias::Model;
using devias::ModelKind;
using devias::RunConfig;
using devias::Tape;
using devias::Tensor;
using devias::Var;
using devias::VideoClip;

namespace {

RunConfig tiny_run(const std::string& model) {
  RunConfig run;
  run.model = model;
  run.dim = 16;
  run.heads = 4;
  run.depth = 1;
  run.frames = 4;
  run.height = run.width = 16;
  run.slots = 2;
  run.slot_iters = 2;
  run.epochs = 2;
  run.warmup_epochs = 1;
  run.batch = 8;
  run.train_clips = 24;
  run.test_clips = 12;
  return run;
}

VideoClip sample_clip(const RunConfig& run, uint64_t seed) {
  return devias::generate_clip(devias::world_config(run), 1, 2, seed);
}

Tensor<float> soft_scene(int id, int n) {
  Tensor<float> t({n});
  t[id] = 0.85f;
  for (int c = 0; c < n; ++c)
    if (c != id) t[c] = 0.15f / (n - 1);
  return t;
}

}  // namespace

TEST_CASE("token models expose the expected heads and features", "[baselines]") {
  for (const char* name : {"one_token", "two_token", "two_token_unified"}) {
    RunConfig run = tiny_run(name);
    Model<float> m = devias::build_model<float>(run);
    INFO("model " << name);
    if (m.kind == ModelKind::two_token_unified) {
      CHECK(m.head.psi_w->value.shape() == devias::Shape{16, 8});
      CHECK(m.cls_tokens->value.shape() == devias::Shape{2, 16});
    } else if (m.kind == ModelKind::two_token) {
      CHECK(m.act_w->value.shape() == devias::Shape{16, 4});
      CHECK(m.sc_w->value.shape() == devias::Shape{16, 4});
      CHECK(m.cls_tokens->value.shape() == devias::Shape{2, 16});
    } else {
      CHECK(m.cls_tokens->value.shape() == devias::Shape{1, 16});
    }

    VideoClip clip = sample_clip(run, 11);
    auto out = devias::infer(m, clip);
    CHECK(out.action_probs.numel() == 4);
    CHECK(out.scene_probs.numel() == 4);
    CHECK(out.action_feat.numel() == 16);
    double pa = 0, ps = 0;
    for (int64_t c = 0; c < 4; ++c) {
      pa += out.action_probs[c];
      ps += out.scene_probs[c];
    }
    CHECK(pa == Catch::Approx(1.0).margin(1e-5));
    CHECK(ps == Catch::Approx(1.0).margin(1e-5));

    if (m.kind == ModelKind::one_token) {
      for (int64_t j = 0; j < 16; ++j)
        REQUIRE(out.action_feat[j] == out.scene_feat[j]);
    } else {
      bool differs = false;
      for (int64_t j = 0; j < 16 && !differs; ++j)
        differs = out.action_feat[j] != out.scene_feat[j];
      CHECK(differs);
    }
  }
}

TEST_CASE("zeroed blocks reduce the two-token model to a linear model",
          "[baselines]") {
  RunConfig run = tiny_run("two_token");
  Model<float> m = devias::build_model<float>(run);
  for (auto& blk : m.enc.blocks)
    for (auto* p : {blk.wo, blk.bo, blk.w2, blk.b2})
      std::fill(p->value.vec().begin(), p->value.vec().end(), 0.f);

  VideoClip clip = sample_clip(run, 13);
  auto out = devias::infer(m, clip);

  // with identity blocks the action feature is token 0 plus its position row
  Tensor<float> feat({16});
  for (int64_t j = 0; j < 16; ++j)
    feat[j] = m.cls_tokens->value(0, j) + m.enc.pos(0, j);
  Tensor<float> logits({4});
  for (int64_t c = 0; c < 4; ++c) {
    logits[c] = m.act_b->value[c];
    for (int64_t j = 0; j < 16; ++j) logits[c] += feat[j] * m.act_w->value(j, c);
  }
  Tensor<float> expect = softmax_axis(logits, 0);
  for (int64_t c = 0; c < 4; ++c)
    CHECK(out.action_probs[c] == Catch::Approx(expect[c]).margin(1e-5));
}

TEST_CASE("one-token multi-task loss is the sum of both terms", "[baselines]") {
  RunConfig run = tiny_run("one_token");
  Model<float> m = devias::build_model<float>(run);
  VideoClip clip = sample_clip(run, 17);
  Tensor<float> y_s = soft_scene(clip.scene_id, 4);

  Tape<float> tape;
  auto res = devias::clip_loss(m, tape, clip, y_s, clip.fg_mask);

  // reconstruct the two cross-entropy terms from the shared token feature
  Tape<float> probe;
  Var<float> x = devias::encode(probe, clip, m.enc, m.cls_tokens);
  Var<float> feat = devias::reshape(devias::row(x, 0), {1, 16});
  Var<float> la = devias::cross_entropy_logits(
      devias::reshape(devias::linear(feat, probe.param(*m.act_w), probe.param(*m.act_b)), {4}),
      devias::one_hot<float>(clip.action_id, 4));
  Var<float> ls = devias::cross_entropy_logits(
      devias::reshape(devias::linear(feat, probe.param(*m.sc_w), probe.param(*m.sc_b)), {4}),
      y_s);
  const double expect = probe.val(la).item() + probe.val(ls).item();
  CHECK(tape.val(res.total).item() == Catch::Approx(expect).margin(1e-5));
}

TEST_CASE("the shared token receives gradient from either loss alone",
          "[baselines]") {
  RunConfig run = tiny_run("one_token");
  Model<float> m = devias::build_model<float>(run);
  VideoClip clip = sample_clip(run, 19);
  Tensor<float> y_s = soft_scene(clip.scene_id, 4);

  auto token_grad_norm = [&](bool action_only) {
    m.params.zero_grads();
    Tape<float> tape;
    Var<float> x = devias::encode(tape, clip, m.enc, m.cls_tokens);
    Var<float> feat = devias::reshape(devias::row(x, 0), {1, 16});
    Var<float> loss;
    if (action_only)
      loss = devias::cross_entropy_logits(
          devias::reshape(devias::linear(feat, tape.param(*m.act_w), tape.param(*m.act_b)), {4}),
          devias::one_hot<float>(clip.action_id, 4));
    else
      loss = devias::cross_entropy_logits(
          devias::reshape(devias::linear(feat, tape.param(*m.sc_w), tape.param(*m.sc_b)), {4}),
          y_s);
    tape.backward(loss);
    double norm = 0;
    for (int64_t i = 0; i < m.cls_tokens->grad.numel(); ++i)
      norm += std::abs(m.cls_tokens->grad[i]);
    return norm;
  };

  CHECK(token_grad_norm(true) > 0.0);
  CHECK(token_grad_norm(false) > 0.0);
}

TEST_CASE("baseline variants train end to end", "[baselines]") {
  for (const char* name : {"two_token", "two_token_unified"}) {
    RunConfig run = tiny_run(name);
    devias::WorldConfig w = devias::world_config(run);
    devias::Splits splits = devias::make_splits(w);
    devias::Dataset train = devias::Dataset::from(w, splits.train);

    devias::Teacher<float> teacher = devias::build_teacher<float>(
        devias::teacher_encoder_config(run), run.scenes, run.seed);
    devias::TeacherHyper hyper = devias::teacher_hyper(run);
    hyper.epochs = 2;
    devias::train_scene_teacher(
        teacher, devias::make_scene_only_set(w, 40, devias::worldtag::kTeacherTrain),
        hyper, run.seed);

    Model<float> model = devias::build_model<float>(run);
    auto inputs = devias::prepare_inputs(run, train, teacher);
    auto result = devias::train_model(model, train, inputs, teacher);
    INFO("model " << name);
    REQUIRE(result.epochs.size() == 2);
    CHECK(std::isfinite(result.epochs.back().loss));
    CHECK(result.epochs.back().l_ag == 0.0);  // token models have no mask losses
  }
}
