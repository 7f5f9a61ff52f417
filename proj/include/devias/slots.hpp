#pragma once

#include <string>
#include <vector>

#include "devias/optim.hpp"
#include "devias/tape.hpp"

namespace devias {

struct SlotConfig {
  int num_slots = 2;  // K
  int iters = 4;      // M
  int dim = 64;       // D; the residual update ties D_h to D

  void validate() const {
    if (num_slots < 1) throw UsageError("need at least 1 slot");
    if (iters < 1) throw UsageError("need at least 1 slot iteration");
  }
};

// All projections and the update MLP are shared across iterations.
template <typename S>
struct SlotParams {
  SlotConfig cfg;
  Param<S>* init_slots = nullptr;  // [K, D]
  Param<S>*ln_slot_g, *ln_slot_b;  // layer norm over slots
  Param<S>*ln_feat_g, *ln_feat_b;  // layer norm over encoder features
  Param<S>*wq, *wk, *wv;           // [D, D], no bias
  Param<S>*mlp_w1, *mlp_b1, *mlp_w2, *mlp_b2;  // D -> D -> D
};

template <typename S>
SlotParams<S> build_slot_params(ParamSet<S>& ps, const SlotConfig& cfg,
                                const std::string& prefix, Rng& rng,
                                int group = 0) {
  cfg.validate();
  const int64_t d = cfg.dim, k = cfg.num_slots;
  SlotParams<S> sp;
  sp.cfg = cfg;
  // i.i.d. noise breaks slot symmetry; identical rows would stay identical
  sp.init_slots = &ps.add(prefix + ".init",
                          Tensor<S>::randn({k, d}, rng, 1.0 / std::sqrt(static_cast<double>(d))),
                          group);
  sp.ln_slot_g = &ps.add(prefix + ".ln_slot.g", Tensor<S>::ones({d}), group);
  sp.ln_slot_b = &ps.add(prefix + ".ln_slot.b", Tensor<S>({d}), group);
  sp.ln_feat_g = &ps.add(prefix + ".ln_feat.g", Tensor<S>::ones({d}), group);
  sp.ln_feat_b = &ps.add(prefix + ".ln_feat.b", Tensor<S>({d}), group);
  sp.wq = &ps.add(prefix + ".wq", Tensor<S>::trunc_normal({d, d}, rng, 0.02), group);
  sp.wk = &ps.add(prefix + ".wk", Tensor<S>::trunc_normal({d, d}, rng, 0.02), group);
  sp.wv = &ps.add(prefix + ".wv", Tensor<S>::trunc_normal({d, d}, rng, 0.02), group);
  sp.mlp_w1 = &ps.add(prefix + ".mlp.w1", Tensor<S>::trunc_normal({d, d}, rng, 0.02), group);
  sp.mlp_b1 = &ps.add(prefix + ".mlp.b1", Tensor<S>({d}), group);
  sp.mlp_w2 = &ps.add(prefix + ".mlp.w2", Tensor<S>::trunc_normal({d, d}, rng, 0.02), group);
  sp.mlp_b2 = &ps.add(prefix + ".mlp.b2", Tensor<S>({d}), group);
  return sp;
}

template <typename S>
struct SlotIterOut {
  Var<S> slots;  // [K, D]
  Var<S> attn;   // [NT, K], softmax over the slot axis
};

template <typename S>
struct SlotState {
  Var<S> slots;  // final slots [K, D]
  Var<S> attn;   // final attention [NT, K]
  std::vector<Tensor<S>> attn_history;  // per-iteration values, optional
};

// One update with pre-projected keys/values. The keys and values depend only
// on X and the shared projections, so the driver hoists them out of the loop.
template <typename S>
SlotIterOut<S> slot_iteration_kv(Var<S> slots, Var<S> keys, Var<S> values,
                                 const SlotParams<S>& sp) {
  Tape<S>& t = *slots.tape;
  const S eps = static_cast<S>(kLayerNormEps);
  const int64_t d = sp.cfg.dim;
  Var<S> sn = layer_norm(slots, t.param(*sp.ln_slot_g), t.param(*sp.ln_slot_b), eps);
  Var<S> q = matmul(sn, t.param(*sp.wq));                         // [K, D]
  Var<S> m = scale(matmul(keys, transpose(q)),
                   S(1) / std::sqrt(static_cast<S>(d)));          // [NT, K]
  Var<S> a = softmax_axis(m, 1);                                  // slot axis
  Var<S> ahat = l2_normalize_axis(a, 0, static_cast<S>(kL2NormEps));  // key axis
  Var<S> z = matmul(transpose(ahat), values);                     // [K, D]
  Var<S> sz = add(slots, z);
  Var<S> upd = linear(gelu(linear(sz, t.param(*sp.mlp_w1), t.param(*sp.mlp_b1))),
                      t.param(*sp.mlp_w2), t.param(*sp.mlp_b2));
  return {add(upd, sz), a};
}

template <typename S>
SlotIterOut<S> slot_iteration(Var<S> slots, Var<S> features,
                              const SlotParams<S>& sp) {
  Tape<S>& t = *slots.tape;
  const S eps = static_cast<S>(kLayerNormEps);
  Var<S> xn = layer_norm(features, t.param(*sp.ln_feat_g), t.param(*sp.ln_feat_b), eps);
  Var<S> keys = matmul(xn, t.param(*sp.wk));
  Var<S> values = matmul(xn, t.param(*sp.wv));
  return slot_iteration_kv(slots, keys, values, sp);
}

template <typename S>
SlotState<S> disentangle(Var<S> features, const SlotParams<S>& sp,
                         bool keep_history = false) {
  Tape<S>& t = *features.tape;
  const S eps = static_cast<S>(kLayerNormEps);
  Var<S> xn = layer_norm(features, t.param(*sp.ln_feat_g), t.param(*sp.ln_feat_b), eps);
  Var<S> keys = matmul(xn, t.param(*sp.wk));
  Var<S> values = matmul(xn, t.param(*sp.wv));
  Var<S> slots = t.param(*sp.init_slots);
  SlotState<S> state;
  for (int m = 0; m < sp.cfg.iters; ++m) {
    SlotIterOut<S> out = slot_iteration_kv(slots, keys, values, sp);
    slots = out.slots;
    state.attn = out.attn;
    if (keep_history) state.attn_history.push_back(t.val(out.attn));
  }
  state.slots = slots;
  return state;
}

}  // namespace devias
