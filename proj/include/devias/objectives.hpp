#pragma once

#include <string>
#include <vector>

#include "devias/encoder.hpp"
#include "devias/matching.hpp"
#include "devias/optim.hpp"
#include "devias/tape.hpp"

namespace devias {

struct LossWeights {
  double alpha = 1.0;  // attention guidance
  double beta = 1.0;   // mask prediction
  double gamma = 1.0;  // slot diversity
};

struct HeadConfig {
  int dim = 64;
  int n_actions = 4;
  int n_scenes = 4;
  int mask_tokens = 16;  // N, spatial tokens predicted by phi

  int64_t unified_width() const { return n_actions + n_scenes; }
};

// psi is one shared linear map for both slots; phi is the shallow mask head.
template <typename S>
struct HeadParams {
  HeadConfig cfg;
  Param<S>*psi_w, *psi_b;
  Param<S>*phi_w1, *phi_b1, *phi_w2, *phi_b2;
};

template <typename S>
HeadParams<S> build_heads(ParamSet<S>& ps, const HeadConfig& cfg,
                          const std::string& prefix, Rng& rng, int group = 0) {
  HeadParams<S> hp;
  hp.cfg = cfg;
  const int64_t d = cfg.dim, w = cfg.unified_width(), hidden = 2 * cfg.dim;
  hp.psi_w = &ps.add(prefix + ".psi.w", Tensor<S>::trunc_normal({d, w}, rng, kInitStd), group);
  hp.psi_b = &ps.add(prefix + ".psi.b", Tensor<S>({w}), group);
  hp.phi_w1 = &ps.add(prefix + ".phi.w1", Tensor<S>::trunc_normal({d, hidden}, rng, kInitStd), group);
  hp.phi_b1 = &ps.add(prefix + ".phi.b1", Tensor<S>({hidden}), group);
  hp.phi_w2 = &ps.add(prefix + ".phi.w2", Tensor<S>::trunc_normal({hidden, cfg.mask_tokens}, rng, kInitStd), group);
  hp.phi_b2 = &ps.add(prefix + ".phi.b2", Tensor<S>({cfg.mask_tokens}), group);
  return hp;
}

template <typename S>
Var<S> unified_head(Var<S> slots, const HeadParams<S>& hp) {
  Tape<S>& t = *slots.tape;
  return linear(slots, t.param(*hp.psi_w), t.param(*hp.psi_b));
}

// L_D: cross-entropy of the zero-padded action label against the action slot's
// prediction plus the padded soft scene label against the scene slot's.
template <typename S>
Var<S> loss_disentangle(Var<S> slot_logits, const SlotAssignment& assign,
                        const Tensor<S>& y_action, const Tensor<S>& y_scene) {
  const int64_t total = slot_logits.tape->val(slot_logits).cols();
  Tensor<S> pad_a = pad_label(y_action, 0, total);
  Tensor<S> pad_s = pad_label(y_scene, y_action.numel(), total);
  return add(cross_entropy_logits(row(slot_logits, assign.k_action), pad_a),
             cross_entropy_logits(row(slot_logits, assign.k_scene), pad_s));
}

// Pool a pixel mask into the encoder's token order: mean over each 2 x p x p
// tubelet, giving the NT-length target for attention guidance.
template <typename S>
Tensor<S> tokenize_mask(const std::vector<uint8_t>& mask,
                        const EncoderConfig& cfg) {
  if (static_cast<int64_t>(mask.size()) !=
      static_cast<int64_t>(cfg.frames) * cfg.height * cfg.width)
    throw ShapeError("mask length does not match the clip geometry");
  const int p = cfg.patch, h = cfg.height, w = cfg.width;
  const int gh = h / p, gw = w / p;
  Tensor<S> out({cfg.tokens()});
  const S denom = S(1) / static_cast<S>(2 * p * p);
  int64_t tok = 0;
  for (int64_t tg = 0; tg < cfg.temporal_groups(); ++tg)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx, ++tok) {
        int64_t count = 0;
        for (int f = 0; f < 2; ++f)
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
              count += mask[((tg * 2 + f) * h + (gy * p + y)) * w + (gx * p + x)];
        out[tok] = static_cast<S>(count) * denom;
      }
  return out;
}

// Temporal mean of the tokenized mask over the 2T/2 frame groups.
template <typename S>
Tensor<S> temporal_average_mask(const Tensor<S>& h_hat, const EncoderConfig& cfg) {
  const int64_t groups = cfg.temporal_groups();
  const int64_t n = cfg.spatial_tokens();
  if (h_hat.numel() != groups * n)
    throw ShapeError("tokenized mask length mismatch");
  Tensor<S> out({n});
  for (int64_t tg = 0; tg < groups; ++tg)
    for (int64_t i = 0; i < n; ++i) out[i] += h_hat[tg * n + i];
  for (int64_t i = 0; i < n; ++i) out[i] /= static_cast<S>(groups);
  return out;
}

// L_AG: squared L2 distance between the action slot's attention column and
// the tokenized mask.
template <typename S>
Var<S> loss_attention_guidance(Var<S> attn, int k_action, Tensor<S> h_hat) {
  Tape<S>& t = *attn.tape;
  if (t.val(attn).rows() != h_hat.numel())
    throw ShapeError("attention guidance: token count mismatch");
  return sum_sq_diff(col(attn, k_action), std::move(h_hat));
}

// L_MP: mean binary cross-entropy of phi(action slot) against the temporally
// averaged mask.
template <typename S>
Var<S> loss_mask_prediction(Var<S> slot_action, const HeadParams<S>& hp,
                            Tensor<S> h_tilde) {
  Tape<S>& t = *slot_action.tape;
  Var<S> x = reshape(slot_action, {1, t.val(slot_action).numel()});
  Var<S> hidden = gelu(linear(x, t.param(*hp.phi_w1), t.param(*hp.phi_b1)));
  Var<S> logits = linear(hidden, t.param(*hp.phi_w2), t.param(*hp.phi_b2));
  Var<S> probs = sigmoid(reshape(logits, {hp.cfg.mask_tokens}));
  return bce_mean(probs, std::move(h_tilde));
}

// Mean pairwise cosine similarity between slots; minimizing it pushes slots
// toward orthogonality.
template <typename S>
Var<S> loss_cosine(Var<S> slots) {
  Tape<S>& t = *slots.tape;
  const int64_t k = t.val(slots).rows();
  if (k < 2) throw UsageError("loss_cosine needs at least 2 slots");
  Var<S> acc;
  int64_t pairs = 0;
  for (int64_t i = 0; i < k; ++i)
    for (int64_t j = i + 1; j < k; ++j, ++pairs) {
      Var<S> c = cosine_sim(row(slots, i), row(slots, j),
                            static_cast<S>(kL2NormEps));
      acc = pairs == 0 ? c : add(acc, c);
    }
  return scale(acc, S(1) / static_cast<S>(pairs));
}

template <typename S>
struct LossParts {
  Var<S> disentangle;
  Var<S> attn_guidance;
  Var<S> mask_prediction;
  Var<S> cosine;
};

template <typename S>
Var<S> total_loss(const LossParts<S>& parts, const LossWeights& w) {
  Var<S> total = parts.disentangle;
  total = add(total, scale(parts.attn_guidance, static_cast<S>(w.alpha)));
  total = add(total, scale(parts.mask_prediction, static_cast<S>(w.beta)));
  total = add(total, scale(parts.cosine, static_cast<S>(w.gamma)));
  return total;
}

}  // namespace devias
