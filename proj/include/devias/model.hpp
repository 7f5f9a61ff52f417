#pragma once

#include <string>
#include <vector>

#include "devias/config.hpp"
#include "devias/encoder.hpp"
#include "devias/matching.hpp"
#include "devias/objectives.hpp"
#include "devias/slots.hpp"

namespace devias {

// One trainable model: the slot-based variant or a token baseline. All
// variants share the encoder implementation; only the mechanism on top of
// the trunk differs.
template <typename S>
struct Model {
  RunConfig run;
  ModelKind kind = ModelKind::devias;
  ParamSet<S> params;
  std::vector<double> group_scales;

  EncoderParams<S> enc;
  // slot variant
  SlotParams<S> slot{};
  HeadParams<S> head{};  // unified psi (+ phi) for devias / two_token_unified
  // token baselines
  Param<S>* cls_tokens = nullptr;       // [n_tokens x D]
  Param<S>* act_w = nullptr, *act_b = nullptr;  // separate heads
  Param<S>* sc_w = nullptr, *sc_b = nullptr;

  int prefix_tokens() const {
    switch (kind) {
      case ModelKind::one_token: return 1;
      case ModelKind::two_token:
      case ModelKind::two_token_unified: return 2;
      default: return 0;
    }
  }
};

template <typename S>
Model<S> build_model(const RunConfig& run) {
  validate_run_config(run);
  Model<S> m;
  m.run = run;
  m.kind = model_kind_from(run.model);
  Rng rng(mix_seed(run.seed, 0x30d31, 0));

  // optimizer groups: 0 is the default; 1..depth+1 hold the embedding and
  // each encoder block for layer-wise rate decay; the last one (slot module)
  // runs at the reduced disentangle rate
  const int depth = run.depth;
  m.group_scales.assign(depth + 2, 1.0);
  std::vector<int> layer_group(depth + 1);
  for (int l = 0; l <= depth; ++l) {
    layer_group[l] = 1 + l;
    m.group_scales[1 + l] =
        run.layer_decay_enabled ? std::pow(run.layer_decay, depth - l) : 1.0;
  }

  EncoderConfig enc_cfg = encoder_config(run, 0);
  const int64_t d = run.dim;
  switch (m.kind) {
    case ModelKind::devias: {
      m.enc = build_encoder(m.params, enc_cfg, "enc", rng, layer_group);
      const int slot_group = static_cast<int>(m.group_scales.size());
      m.group_scales.push_back(run.slot_lr_scale);
      m.slot = build_slot_params(m.params, slot_config(run), "slot", rng, slot_group);
      m.head = build_heads(m.params, head_config(run), "head", rng, 0);
      break;
    }
    case ModelKind::two_token_unified:
    case ModelKind::two_token:
    case ModelKind::one_token: {
      enc_cfg.prefix_tokens = m.prefix_tokens();
      m.enc = build_encoder(m.params, enc_cfg, "enc", rng, layer_group);
      m.cls_tokens = &m.params.add(
          "tokens", Tensor<S>::trunc_normal({m.prefix_tokens(), d}, rng, kInitStd), 0);
      if (m.kind == ModelKind::two_token_unified) {
        m.head = build_heads(m.params, head_config(run), "head", rng, 0);
      } else {
        m.act_w = &m.params.add("head.action.w",
                                Tensor<S>::trunc_normal({d, run.actions}, rng, kInitStd), 0);
        m.act_b = &m.params.add("head.action.b", Tensor<S>({run.actions}), 0);
        m.sc_w = &m.params.add("head.scene.w",
                               Tensor<S>::trunc_normal({d, run.scenes}, rng, kInitStd), 0);
        m.sc_b = &m.params.add("head.scene.b", Tensor<S>({run.scenes}), 0);
      }
      break;
    }
  }
  return m;
}

template <typename S>
struct ClipLossResult {
  Var<S> total{};
  double l_d = 0, l_ag = 0, l_mp = 0, l_cos = 0;
  SlotAssignment assign;
  int pred_action = -1;
};

// Training loss of one clip. `y_scene` is the frozen teacher's soft label;
// `h_mask` is the pixel mask driving the mask-guided losses (slot variant).
template <typename S>
ClipLossResult<S> clip_loss(Model<S>& m, Tape<S>& tape, const VideoClip& clip,
                            const Tensor<S>& y_scene,
                            const std::vector<uint8_t>& h_mask) {
  const LossWeights w = loss_weights(m.run);
  const int na = m.run.actions;
  Tensor<S> y_action = one_hot<S>(clip.action_id, na);
  ClipLossResult<S> out;

  if (m.kind == ModelKind::devias) {
    Var<S> x = encode(tape, clip, m.enc);
    SlotState<S> state = disentangle(x, m.slot, false);
    Var<S> logits = unified_head(state.slots, m.head);
    out.assign = hungarian(build_cost(tape.val(logits), y_action, y_scene));

    LossParts<S> parts;
    parts.disentangle = loss_disentangle(logits, out.assign, y_action, y_scene);
    Tensor<S> h_hat = tokenize_mask<S>(h_mask, m.enc.cfg);
    Tensor<S> h_tilde = temporal_average_mask(h_hat, m.enc.cfg);
    parts.attn_guidance =
        loss_attention_guidance(state.attn, out.assign.k_action, std::move(h_hat));
    parts.mask_prediction = loss_mask_prediction(
        row(state.slots, out.assign.k_action), m.head, std::move(h_tilde));
    parts.cosine = loss_cosine(state.slots);
    out.total = total_loss(parts, w);

    out.l_d = tape.val(parts.disentangle).item();
    out.l_ag = tape.val(parts.attn_guidance).item();
    out.l_mp = tape.val(parts.mask_prediction).item();
    out.l_cos = tape.val(parts.cosine).item();
    const Tensor<S>& lg = tape.val(logits);
    out.pred_action = 0;
    for (int c = 1; c < na; ++c)
      if (lg(out.assign.k_action, c) > lg(out.assign.k_action, out.pred_action))
        out.pred_action = c;
    return out;
  }

  // token baselines
  Var<S> x = encode(tape, clip, m.enc, m.cls_tokens);
  Var<S> act_feat = row(x, 0);
  Var<S> sc_feat = row(x, m.prefix_tokens() == 2 ? 1 : 0);
  Var<S> la{}, ls{};
  Tensor<S> act_logits_v;
  if (m.kind == ModelKind::two_token_unified) {
    const int64_t total = na + m.run.scenes;
    Var<S> la_logits = reshape(
        linear(reshape(act_feat, {1, m.run.dim}), tape.param(*m.head.psi_w),
               tape.param(*m.head.psi_b)),
        {total});
    Var<S> ls_logits = reshape(
        linear(reshape(sc_feat, {1, m.run.dim}), tape.param(*m.head.psi_w),
               tape.param(*m.head.psi_b)),
        {total});
    la = cross_entropy_logits(la_logits, pad_label(y_action, 0, total));
    ls = cross_entropy_logits(ls_logits, pad_label(y_scene, na, total));
    act_logits_v = tape.val(la_logits);
  } else {
    Var<S> la_logits = reshape(
        linear(reshape(act_feat, {1, m.run.dim}), tape.param(*m.act_w),
               tape.param(*m.act_b)),
        {static_cast<int64_t>(na)});
    Var<S> ls_logits = reshape(
        linear(reshape(sc_feat, {1, m.run.dim}), tape.param(*m.sc_w),
               tape.param(*m.sc_b)),
        {static_cast<int64_t>(m.run.scenes)});
    la = cross_entropy_logits(la_logits, y_action);
    ls = cross_entropy_logits(ls_logits, y_scene);
    act_logits_v = tape.val(la_logits);
  }
  out.total = add(la, ls);
  out.l_d = tape.val(out.total).item();
  out.pred_action = 0;
  for (int c = 1; c < na; ++c)
    if (act_logits_v[c] > act_logits_v[out.pred_action]) out.pred_action = c;
  return out;
}

template <typename S>
struct InferOutput {
  Tensor<S> action_probs;  // [Na]
  Tensor<S> scene_probs;   // [Ns]
  SlotAssignment assign;   // slot variant only
  Tensor<S> attn;          // [NT x K] slot variant only
  Tensor<S> action_feat;   // feature vectors for the probing protocols
  Tensor<S> scene_feat;
};

namespace detail {

// restrict the unified softmax to one block and renormalize
template <typename S>
Tensor<S> block_probs(const Tensor<S>& probs_row, int64_t offset, int64_t len) {
  Tensor<S> out({len});
  S total = 0;
  for (int64_t c = 0; c < len; ++c) total += probs_row[offset + c];
  for (int64_t c = 0; c < len; ++c) out[c] = probs_row[offset + c] / total;
  return out;
}

}  // namespace detail

template <typename S>
InferOutput<S> infer(Model<S>& m, const VideoClip& clip) {
  Tape<S> tape;
  const int64_t na = m.run.actions, ns = m.run.scenes;
  InferOutput<S> out;
  if (m.kind == ModelKind::devias) {
    Var<S> x = encode(tape, clip, m.enc);
    SlotState<S> state = disentangle(x, m.slot, false);
    Var<S> logits = unified_head(state.slots, m.head);
    Tensor<S> probs = softmax_axis(tape.val(logits), 1);
    out.assign = assign_infer(probs, na);
    out.action_probs = detail::block_probs(row_of(probs, out.assign.k_action), 0, na);
    out.scene_probs = detail::block_probs(row_of(probs, out.assign.k_scene), na, ns);
    out.attn = tape.val(state.attn);
    out.action_feat = row_of(tape.val(state.slots), out.assign.k_action);
    out.scene_feat = row_of(tape.val(state.slots), out.assign.k_scene);
    return out;
  }
  Var<S> x = encode(tape, clip, m.enc, m.cls_tokens);
  out.action_feat = row_of(tape.val(x), 0);
  out.scene_feat = row_of(tape.val(x), m.prefix_tokens() == 2 ? 1 : 0);
  auto head_probs = [&](const Tensor<S>& feat, Param<S>* w, Param<S>* b) {
    Tensor<S> logits = matmul(feat.reshaped({1, m.run.dim}), w->value);
    for (int64_t c = 0; c < logits.numel(); ++c) logits[c] += b->value[c];
    return softmax_axis(logits.reshaped({logits.numel()}), 0);
  };
  if (m.kind == ModelKind::two_token_unified) {
    Tensor<S> pa = head_probs(out.action_feat, m.head.psi_w, m.head.psi_b);
    Tensor<S> ps = head_probs(out.scene_feat, m.head.psi_w, m.head.psi_b);
    out.action_probs = detail::block_probs(pa, 0, na);
    out.scene_probs = detail::block_probs(ps, na, ns);
  } else {
    out.action_probs = head_probs(out.action_feat, m.act_w, m.act_b);
    out.scene_probs = head_probs(out.scene_feat, m.sc_w, m.sc_b);
  }
  return out;
}

template <typename S>
int argmax(const Tensor<S>& v) {
  int best = 0;
  for (int64_t i = 1; i < v.numel(); ++i)
    if (v[i] > v[best]) best = static_cast<int>(i);
  return best;
}

}  // namespace devias
