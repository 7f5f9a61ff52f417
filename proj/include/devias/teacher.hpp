#pragma once

#include <numeric>
#include <string>
#include <vector>

#include "devias/encoder.hpp"
#include "devias/matching.hpp"
#include "devias/optim.hpp"

namespace devias {

struct TeacherHyper {
  int epochs = 10;
  int batch = 16;
  double base_lr = 1e-3;
  int warmup_epochs = 1;
  double weight_decay = 0.05;
};

// Frozen scene classifier: a reduced encoder trunk, mean-pooled tokens, and a
// linear head. It is trained once on scene-only clips and afterwards only
// queried for soft labels.
template <typename S>
struct Teacher {
  EncoderConfig enc_cfg;
  int n_scenes = 4;
  ParamSet<S> params;
  EncoderParams<S> enc;
  Param<S>* head_w = nullptr;
  Param<S>* head_b = nullptr;
  bool trained = false;
};

template <typename S>
Teacher<S> build_teacher(const EncoderConfig& enc_cfg, int n_scenes,
                         uint64_t seed) {
  Teacher<S> t;
  t.enc_cfg = enc_cfg;
  t.n_scenes = n_scenes;
  Rng rng(mix_seed(seed, 0x7e4c, 0));
  t.enc = build_encoder(t.params, enc_cfg, "teacher.enc", rng);
  t.head_w = &t.params.add("teacher.head.w",
                           Tensor<S>::trunc_normal({enc_cfg.dim, n_scenes}, rng, kInitStd));
  t.head_b = &t.params.add("teacher.head.b", Tensor<S>({n_scenes}));
  return t;
}

template <typename S>
Var<S> teacher_logits(Tape<S>& tape, const VideoClip& clip, Teacher<S>& t) {
  Var<S> x = encode(tape, clip, t.enc);
  Var<S> pooled = reshape(mean_rows(x), {1, t.enc_cfg.dim});
  Var<S> logits = linear(pooled, tape.param(*t.head_w), tape.param(*t.head_b));
  return reshape(logits, {static_cast<int64_t>(t.n_scenes)});
}

template <typename S>
Tensor<float> teacher_soft_label(Teacher<S>& t, const VideoClip& clip) {
  if (!t.trained)
    throw UsageError("teacher queried before training");
  Tape<S> tape;
  Var<S> logits = teacher_logits(tape, clip, t);
  Tensor<S> probs = softmax_axis(tape.val(logits), 0);
  return probs.template cast<float>();
}

template <typename S>
void train_scene_teacher(Teacher<S>& t, const std::vector<VideoClip>& clips,
                         const TeacherHyper& hyper, uint64_t seed) {
  if (clips.empty()) throw UsageError("teacher training needs clips");
  const int b = hyper.batch;
  const int64_t steps_per_epoch = (clips.size() + b - 1) / b;
  const int64_t total_steps = steps_per_epoch * hyper.epochs;
  const int64_t warmup_steps = steps_per_epoch * hyper.warmup_epochs;

  AdamWConfig acfg;
  acfg.base_lr = hyper.base_lr;
  acfg.weight_decay = hyper.weight_decay;
  OptState<S> opt(t.params, acfg, {1.0});
  Rng shuffle_rng(mix_seed(seed, 0x7e5d, 0));

  std::vector<int> order(clips.size());
  std::iota(order.begin(), order.end(), 0);
  int64_t step = 0;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[shuffle_rng.uniform_int(i)]);
    for (size_t start = 0; start < order.size(); start += b) {
      const size_t end = std::min(order.size(), start + b);
      t.params.zero_grads();
      const S inv = S(1) / static_cast<S>(end - start);
      for (size_t i = start; i < end; ++i) {
        const VideoClip& clip = clips[order[i]];
        Tape<S> tape;
        Var<S> logits = teacher_logits(tape, clip, t);
        Var<S> loss = cross_entropy_logits(
            logits, one_hot<S>(clip.scene_id, t.n_scenes));
        tape.backward(scale(loss, inv));
      }
      ++step;
      opt.step(t.params, cosine_lr(std::min(step, total_steps), warmup_steps,
                                   total_steps + 1, hyper.base_lr));
    }
  }
  t.trained = true;
}

template <typename S>
double teacher_top1(Teacher<S>& t, const std::vector<VideoClip>& clips) {
  int64_t hits = 0;
  for (const VideoClip& clip : clips) {
    Tensor<float> probs = teacher_soft_label(t, clip);
    int best = 0;
    for (int c = 1; c < t.n_scenes; ++c)
      if (probs[c] > probs[best]) best = c;
    hits += best == clip.scene_id;
  }
  return static_cast<double>(hits) / clips.size();
}

}  // namespace devias
