#pragma once

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "devias/evaluation.hpp"
#include "devias/pipeline.hpp"

namespace devias {

// Inference outputs of one split, gathered once and reused by the metrics.
template <typename S>
struct SplitOutputs {
  std::vector<Tensor<S>> action_probs, scene_probs;
  std::vector<Tensor<S>> action_feats, scene_feats;
  std::vector<int> action_labels, scene_labels;
  std::vector<SlotAssignment> assigns;
};

template <typename S>
SplitOutputs<S> run_split(Model<S>& model, const Dataset& split, int threads) {
  const int64_t n = static_cast<int64_t>(split.clips.size());
  SplitOutputs<S> out;
  out.action_probs.resize(n);
  out.scene_probs.resize(n);
  out.action_feats.resize(n);
  out.scene_feats.resize(n);
  out.action_labels.resize(n);
  out.scene_labels.resize(n);
  out.assigns.resize(n);
  parallel_for(n, threads, [&](int64_t i) {
    InferOutput<S> res = infer(model, split.clips[i]);
    out.action_probs[i] = std::move(res.action_probs);
    out.scene_probs[i] = std::move(res.scene_probs);
    out.action_feats[i] = std::move(res.action_feat);
    out.scene_feats[i] = std::move(res.scene_feat);
    out.assigns[i] = res.assign;
    out.action_labels[i] = split.clips[i].action_id;
    out.scene_labels[i] = split.clips[i].scene_id;
  });
  return out;
}

struct KnnTable {
  int k = 10;
  double action_action = 0, scene_scene = 0;  // normal cells
  double action_scene = 0, scene_action = 0;  // reverse cells
};

struct EvalReport {
  // top-1 accuracies per split
  double in_action = 0, in_scene = 0;
  double out_action = 0, out_scene = 0;
  double scene_only_scene = 0;
  // harmonic mean over {in action, out action, in scene, out scene mean}
  std::array<double, 4> hm_inputs{};
  double harmonic = 0;
  KnnTable knn;
  SlotFrequency freq_in, freq_out, freq_scene_only;
  int num_slots = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["splits"]["in_context"] = {{"action_top1", in_action}, {"scene_top1", in_scene}};
    j["splits"]["out_of_context"] = {{"action_top1", out_action}, {"scene_top1", out_scene}};
    j["splits"]["scene_only"] = {{"scene_top1", scene_only_scene}};
    j["harmonic_mean"] = {{"inputs", hm_inputs}, {"value", harmonic}};
    j["knn"] = {{"k", knn.k},
                {"normal", {{"action_action", knn.action_action},
                            {"scene_scene", knn.scene_scene}}},
                {"reverse", {{"action_scene", knn.action_scene},
                             {"scene_action", knn.scene_action}}}};
    if (num_slots > 0) {
      auto freq_json = [](const SlotFrequency& f) {
        nlohmann::json out;
        out["action_share"] = f.action_share;
        out["scene_share"] = f.scene_share;
        return out;
      };
      j["slot_frequency"] = {{"in_context", freq_json(freq_in)},
                             {"out_of_context", freq_json(freq_out)},
                             {"scene_only", freq_json(freq_scene_only)}};
    }
    return j;
  }
};

// The four-way protocol: in/out-of-context action and scene accuracy, the
// harmonic mean (out-of-context scene averages the swapped-scene and
// scene-only splits), the nearest-neighbor sanity table, and per-slot
// assignment shares.
template <typename S>
EvalReport evaluate_model(Model<S>& model, const Dataset& train,
                          const Dataset& in_ctx, const Dataset& out_ctx,
                          const Dataset& scene_only, int knn_k = 10,
                          int threads = 1) {
  EvalReport rep;
  SplitOutputs<S> train_out = run_split(model, train, threads);
  SplitOutputs<S> in_out = run_split(model, in_ctx, threads);
  SplitOutputs<S> oo_out = run_split(model, out_ctx, threads);
  SplitOutputs<S> so_out = run_split(model, scene_only, threads);

  rep.in_action = topk_accuracy(in_out.action_probs, in_out.action_labels, 1);
  rep.in_scene = topk_accuracy(in_out.scene_probs, in_out.scene_labels, 1);
  rep.out_action = topk_accuracy(oo_out.action_probs, oo_out.action_labels, 1);
  rep.out_scene = topk_accuracy(oo_out.scene_probs, oo_out.scene_labels, 1);
  rep.scene_only_scene = topk_accuracy(so_out.scene_probs, so_out.scene_labels, 1);

  const double out_scene_mean = 0.5 * (rep.out_scene + rep.scene_only_scene);
  rep.hm_inputs = {rep.in_action, rep.out_action, rep.in_scene, out_scene_mean};
  rep.harmonic = harmonic_mean({rep.hm_inputs[0], rep.hm_inputs[1],
                                rep.hm_inputs[2], rep.hm_inputs[3]});

  rep.knn.k = knn_k;
  rep.knn.action_action = knn_protocol(train_out.action_feats, train_out.action_labels,
                                       in_out.action_feats, in_out.action_labels,
                                       knn_k, threads);
  rep.knn.scene_scene = knn_protocol(train_out.scene_feats, train_out.scene_labels,
                                     in_out.scene_feats, in_out.scene_labels,
                                     knn_k, threads);
  rep.knn.action_scene = knn_protocol(train_out.action_feats, train_out.action_labels,
                                      in_out.scene_feats, in_out.action_labels,
                                      knn_k, threads);
  rep.knn.scene_action = knn_protocol(train_out.scene_feats, train_out.scene_labels,
                                      in_out.action_feats, in_out.scene_labels,
                                      knn_k, threads);

  if (model.kind == ModelKind::devias) {
    rep.num_slots = model.run.slots;
    rep.freq_in = slot_assignment_frequency(in_out.assigns, rep.num_slots);
    rep.freq_out = slot_assignment_frequency(oo_out.assigns, rep.num_slots);
    rep.freq_scene_only = slot_assignment_frequency(so_out.assigns, rep.num_slots);
  }
  return rep;
}

}  // namespace devias
