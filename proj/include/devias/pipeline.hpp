#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "devias/augmentation.hpp"
#include "devias/checkpoint.hpp"
#include "devias/config.hpp"
#include "devias/model.hpp"
#include "devias/parallel.hpp"
#include "devias/teacher.hpp"

namespace devias {

struct EpochStats {
  int epoch = 0;
  double loss = 0, l_d = 0, l_ag = 0, l_mp = 0, l_cos = 0;
  double train_acc = 0;
  double lr = 0;

  std::string json_line() const {
    std::ostringstream os;
    os.precision(10);
    os << "{\"epoch\":" << epoch << ",\"loss\":" << loss << ",\"l_d\":" << l_d
       << ",\"l_ag\":" << l_ag << ",\"l_mp\":" << l_mp << ",\"l_cos\":" << l_cos
       << ",\"train_acc\":" << train_acc << ",\"lr\":" << lr << "}";
    return os.str();
  }
};

struct TrainOutput {
  uint64_t steps = 0;
  std::string rng_state;
  std::vector<EpochStats> epochs;
};

namespace detail {

inline std::vector<int> pick_subset(int total, double rho, Rng& rng) {
  const int n = static_cast<int>(rho * total);
  std::vector<int> idx(total);
  std::iota(idx.begin(), idx.end(), 0);
  for (int t = 0; t < n; ++t) {
    const int j = t + static_cast<int>(rng.uniform_int(total - t));
    std::swap(idx[t], idx[j]);
  }
  idx.resize(n);
  return idx;
}

}  // namespace detail

// Per-clip supervision inputs, resolved once per dataset: the effective mask
// (ground truth or motion estimate) and the frozen teacher's soft label.
template <typename S>
struct TrainInputs {
  std::vector<std::vector<uint8_t>> motion_masks;  // only for motion_estimate
  std::vector<Tensor<S>> soft_labels;
  MaskSource mask_source = MaskSource::ground_truth;

  const std::vector<uint8_t>& mask_of(const Dataset& data, int i) const {
    return mask_source == MaskSource::ground_truth ? data.clips[i].fg_mask
                                                   : motion_masks[i];
  }
};

template <typename S>
TrainInputs<S> prepare_inputs(const RunConfig& run, const Dataset& data,
                              Teacher<S>& teacher) {
  TrainInputs<S> in;
  const AugConfig aug = aug_config(run);
  in.mask_source = aug.mask_source;
  if (aug.mask_source == MaskSource::motion_estimate) {
    in.motion_masks.resize(data.clips.size());
    parallel_for(static_cast<int64_t>(data.clips.size()), run.threads,
                 [&](int64_t i) {
                   in.motion_masks[i] = extract_motion_mask(data.clips[i], aug.tau);
                 });
  }
  in.soft_labels.resize(data.clips.size());
  for (size_t i = 0; i < data.clips.size(); ++i)
    in.soft_labels[i] = teacher_soft_label(teacher, data.clips[i]).template cast<S>();
  return in;
}

// Full training loop: seeded shuffling, batch augmentation, per-clip forward
// and backward, AdamW with the cosine schedule and per-group rate scales.
template <typename S>
TrainOutput train_model(Model<S>& model, const Dataset& data,
                        const TrainInputs<S>& inputs, Teacher<S>& teacher,
                        std::ostream* metrics = nullptr) {
  const RunConfig& run = model.run;
  const AugKind aug_kind = resolve_aug(run);
  const AugConfig aug = aug_config(run);
  const int n = static_cast<int>(data.clips.size());
  const int b = run.batch;
  if (n == 0) throw UsageError("training needs at least one clip");

  const int64_t steps_per_epoch = (n + b - 1) / b;
  const int64_t total_steps = steps_per_epoch * run.epochs;
  const int64_t warmup_steps = steps_per_epoch * run.warmup_epochs;

  AdamWConfig acfg;
  acfg.base_lr = run.base_lr;
  acfg.weight_decay = run.weight_decay;
  OptState<S> opt(model.params, acfg, model.group_scales);
  Rng rng(mix_seed(run.seed, 0x7a17, 0));

  TrainOutput out;
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  int64_t step = 0;

  for (int epoch = 0; epoch < run.epochs; ++epoch) {
    EpochStats stats;
    stats.epoch = epoch;
    int64_t seen = 0, correct = 0;
    for (size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);

    for (int start = 0; start < n; start += b) {
      const int end = std::min(n, start + b);
      const int bsize = end - start;

      std::vector<VideoClip> batch;
      std::vector<const std::vector<uint8_t>*> masks;
      std::vector<Tensor<S>> labels;
      batch.reserve(bsize);
      for (int i = start; i < end; ++i) {
        const int src = order[i];
        batch.push_back(data.clips[src]);
        masks.push_back(&inputs.mask_of(data, src));
        labels.push_back(inputs.soft_labels[src]);
      }

      if (aug_kind == AugKind::scene_swap && bsize >= 2) {
        const std::vector<int> swapped =
            apply_batch_aug(batch, masks, aug.rho, rng);
        for (int i : swapped)
          labels[i] = teacher_soft_label(teacher, batch[i]).template cast<S>();
      } else if (aug_kind == AugKind::be) {
        for (int i : detail::pick_subset(bsize, aug.rho, rng))
          batch[i] = be_mix(batch[i], rng, aug.be_weight_max);
      }

      model.params.zero_grads();
      const S inv = S(1) / static_cast<S>(bsize);
      for (int i = 0; i < bsize; ++i) {
        Tape<S> tape;
        ClipLossResult<S> res = clip_loss(model, tape, batch[i], labels[i], *masks[i]);
        const double lv = static_cast<double>(tape.val(res.total).item());
        if (!std::isfinite(lv))
          throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                             " step " + std::to_string(step));
        tape.backward(scale(res.total, inv));
        stats.loss += lv;
        stats.l_d += res.l_d;
        stats.l_ag += res.l_ag;
        stats.l_mp += res.l_mp;
        stats.l_cos += res.l_cos;
        correct += res.pred_action == batch[i].action_id;
        ++seen;
      }
      ++step;
      const double lr = cosine_lr(std::min(step, total_steps), warmup_steps,
                                  total_steps + 1, run.base_lr);
      stats.lr = lr;
      opt.step(model.params, lr);
    }
    stats.loss /= seen;
    stats.l_d /= seen;
    stats.l_ag /= seen;
    stats.l_mp /= seen;
    stats.l_cos /= seen;
    stats.train_acc = static_cast<double>(correct) / seen;
    if (metrics) (*metrics) << stats.json_line() << "\n" << std::flush;
    out.epochs.push_back(stats);
  }
  out.steps = static_cast<uint64_t>(step);
  out.rng_state = rng.serialize();
  return out;
}

// ---- checkpoint glue ----

template <typename S>
void save_model(const std::string& path, const Model<S>& model, uint64_t step,
                const std::string& rng_state) {
  write_dvck1(path, checkpoint_of(model.params, config_to_text(model.run), step,
                                  rng_state));
}

template <typename S>
Model<S> load_model(const std::string& path) {
  CheckpointData ck = read_dvck1(path);
  RunConfig run = config_from_text(ck.config_text);
  Model<S> model = build_model<S>(run);
  apply_checkpoint(model.params, ck);
  return model;
}

template <typename S>
void save_teacher(const std::string& path, const Teacher<S>& teacher,
                  const RunConfig& run) {
  write_dvck1(path, checkpoint_of(teacher.params, config_to_text(run), 0, ""));
}

template <typename S>
Teacher<S> load_teacher(const std::string& path) {
  CheckpointData ck = read_dvck1(path);
  RunConfig run = config_from_text(ck.config_text);
  Teacher<S> teacher =
      build_teacher<S>(teacher_encoder_config(run), run.scenes, run.seed);
  apply_checkpoint(teacher.params, ck);
  teacher.trained = true;
  return teacher;
}

}  // namespace devias
