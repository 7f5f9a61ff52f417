#pragma once

#include <string>
#include <vector>

#include "devias/optim.hpp"
#include "devias/tape.hpp"
#include "devias/world.hpp"

namespace devias {

inline constexpr double kInitStd = 0.02;

struct EncoderConfig {
  int dim = 64;
  int heads = 4;
  int depth = 3;
  int patch = 8;
  int frames = 8;  // 2T
  int height = 32;
  int width = 32;
  int channels = 1;
  int prefix_tokens = 0;  // learnable tokens prepended by token baselines

  int64_t temporal_groups() const { return frames / 2; }
  int64_t spatial_tokens() const {
    return static_cast<int64_t>(height / patch) * (width / patch);
  }
  int64_t tokens() const { return temporal_groups() * spatial_tokens(); }
  int64_t tubelet_len() const {
    return static_cast<int64_t>(2) * patch * patch * channels;
  }

  void validate() const {
    if (height % patch != 0 || width % patch != 0)
      throw UsageError("frame size must be divisible by the patch size");
    if (frames % 2 != 0) throw UsageError("frame count must be even");
    if (dim % heads != 0) throw UsageError("head count must divide dim");
  }
};

// Fixed sinusoidal table over the flattened token index.
template <typename S>
Tensor<S> sinusoid_table(int64_t rows, int64_t dim) {
  Tensor<S> pe({rows, dim});
  for (int64_t p = 0; p < rows; ++p)
    for (int64_t i = 0; i < dim; i += 2) {
      const double rate = std::pow(10000.0, static_cast<double>(i) / dim);
      pe(p, i) = static_cast<S>(std::sin(p / rate));
      if (i + 1 < dim) pe(p, i + 1) = static_cast<S>(std::cos(p / rate));
    }
  return pe;
}

template <typename S>
struct BlockParams {
  Param<S>*ln1_g, *ln1_b, *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
  Param<S>*ln2_g, *ln2_b, *w1, *b1, *w2, *b2;
};

template <typename S>
struct EncoderParams {
  EncoderConfig cfg;
  Param<S>* embed_w = nullptr;  // [2*p*p*C, D]
  Param<S>* embed_b = nullptr;
  Tensor<S> pos;  // [(prefix + NT), D], fixed (non-learnable)
  std::vector<BlockParams<S>> blocks;
};

// Registers all encoder parameters. `layer_group` maps the embedding (index 0)
// and each block (1-based) to an optimizer group for layer-wise rate decay.
template <typename S>
EncoderParams<S> build_encoder(ParamSet<S>& ps, const EncoderConfig& cfg,
                               const std::string& prefix, Rng& rng,
                               const std::vector<int>& layer_group = {}) {
  cfg.validate();
  auto group = [&](int layer) {
    return layer < static_cast<int>(layer_group.size()) ? layer_group[layer] : 0;
  };
  EncoderParams<S> enc;
  enc.cfg = cfg;
  const int64_t d = cfg.dim;
  enc.embed_w = &ps.add(prefix + ".embed.w",
                        Tensor<S>::trunc_normal({cfg.tubelet_len(), d}, rng, kInitStd),
                        group(0));
  enc.embed_b = &ps.add(prefix + ".embed.b", Tensor<S>({d}), group(0));
  enc.pos = sinusoid_table<S>(cfg.prefix_tokens + cfg.tokens(), d);
  enc.blocks.resize(cfg.depth);
  for (int l = 0; l < cfg.depth; ++l) {
    const std::string bp = prefix + ".block" + std::to_string(l) + ".";
    const int g = group(l + 1);
    BlockParams<S>& b = enc.blocks[l];
    b.ln1_g = &ps.add(bp + "ln1.g", Tensor<S>::ones({d}), g);
    b.ln1_b = &ps.add(bp + "ln1.b", Tensor<S>({d}), g);
    b.wq = &ps.add(bp + "attn.wq", Tensor<S>::trunc_normal({d, d}, rng, kInitStd), g);
    b.bq = &ps.add(bp + "attn.bq", Tensor<S>({d}), g);
    b.wk = &ps.add(bp + "attn.wk", Tensor<S>::trunc_normal({d, d}, rng, kInitStd), g);
    b.bk = &ps.add(bp + "attn.bk", Tensor<S>({d}), g);
    b.wv = &ps.add(bp + "attn.wv", Tensor<S>::trunc_normal({d, d}, rng, kInitStd), g);
    b.bv = &ps.add(bp + "attn.bv", Tensor<S>({d}), g);
    b.wo = &ps.add(bp + "attn.wo", Tensor<S>::trunc_normal({d, d}, rng, kInitStd), g);
    b.bo = &ps.add(bp + "attn.bo", Tensor<S>({d}), g);
    b.ln2_g = &ps.add(bp + "ln2.g", Tensor<S>::ones({d}), g);
    b.ln2_b = &ps.add(bp + "ln2.b", Tensor<S>({d}), g);
    b.w1 = &ps.add(bp + "mlp.w1", Tensor<S>::trunc_normal({d, 4 * d}, rng, kInitStd), g);
    b.b1 = &ps.add(bp + "mlp.b1", Tensor<S>({4 * d}), g);
    b.w2 = &ps.add(bp + "mlp.w2", Tensor<S>::trunc_normal({4 * d, d}, rng, kInitStd), g);
    b.b2 = &ps.add(bp + "mlp.b2", Tensor<S>({d}), g);
  }
  return enc;
}

// Token order contract: time-major over the 2T/2 frame pairs, then row-major
// over the (H/p) x (W/p) grid. Mask tokenization must follow the same order.
template <typename S>
Tensor<S> clip_to_tubelets(const VideoClip& clip, const EncoderConfig& cfg) {
  const int p = cfg.patch, c = cfg.channels, h = cfg.height, w = cfg.width;
  if (clip.frames.extent(0) != cfg.frames || clip.frames.extent(1) != h ||
      clip.frames.extent(2) != w || clip.frames.extent(3) != c)
    throw ShapeError("clip geometry does not match the encoder config");
  Tensor<S> out({cfg.tokens(), cfg.tubelet_len()});
  const int gh = h / p, gw = w / p;
  int64_t tok = 0;
  for (int64_t tg = 0; tg < cfg.temporal_groups(); ++tg)
    for (int gy = 0; gy < gh; ++gy)
      for (int gx = 0; gx < gw; ++gx, ++tok) {
        S* dst = out.data() + tok * cfg.tubelet_len();
        for (int f = 0; f < 2; ++f)
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x)
              for (int ch = 0; ch < c; ++ch)
                *dst++ = static_cast<S>(
                    clip.frames[(((tg * 2 + f) * h + (gy * p + y)) * w +
                                 (gx * p + x)) * c + ch]);
      }
  return out;
}

template <typename S>
Var<S> tubelet_embed(Tape<S>& tape, const VideoClip& clip,
                     const EncoderParams<S>& enc) {
  Tensor<S> tubelets = clip_to_tubelets<S>(clip, enc.cfg);
  return linear(tape.constant(std::move(tubelets)), tape.param(*enc.embed_w),
                tape.param(*enc.embed_b));
}

template <typename S>
Var<S> add_positional(Var<S> x, const Tensor<S>& pos) {
  Tape<S>& t = *x.tape;
  if (!(t.val(x).same_shape(pos)))
    throw ShapeError("positional table shape mismatch");
  return add(x, t.constant(pos));
}

template <typename S>
Var<S> transformer_block(Var<S> x, const BlockParams<S>& b, int heads, S eps) {
  Tape<S>& t = *x.tape;
  Var<S> h = layer_norm(x, t.param(*b.ln1_g), t.param(*b.ln1_b), eps);
  Var<S> q = linear(h, t.param(*b.wq), t.param(*b.bq));
  Var<S> k = linear(h, t.param(*b.wk), t.param(*b.bk));
  Var<S> v = linear(h, t.param(*b.wv), t.param(*b.bv));
  Var<S> attn = attention_heads(q, k, v, heads);
  x = add(x, linear(attn, t.param(*b.wo), t.param(*b.bo)));
  Var<S> h2 = layer_norm(x, t.param(*b.ln2_g), t.param(*b.ln2_b), eps);
  Var<S> m = linear(gelu(linear(h2, t.param(*b.w1), t.param(*b.b1))),
                    t.param(*b.w2), t.param(*b.b2));
  return add(x, m);
}

// Full trunk: tubelet embedding, optional learnable prefix tokens, fixed
// positions, then depth pre-norm blocks. No classification token by default.
template <typename S>
Var<S> encode(Tape<S>& tape, const VideoClip& clip, const EncoderParams<S>& enc,
              Param<S>* prefix_tokens = nullptr) {
  Var<S> x = tubelet_embed(tape, clip, enc);
  if (enc.cfg.prefix_tokens > 0) {
    if (!prefix_tokens)
      throw UsageError("encoder configured with prefix tokens but none bound");
    x = concat_rows(tape.param(*prefix_tokens), x);
  }
  x = add_positional(x, enc.pos);
  const S eps = static_cast<S>(kLayerNormEps);
  for (const BlockParams<S>& b : enc.blocks)
    x = transformer_block(x, b, enc.cfg.heads, eps);
  return x;
}

}  // namespace devias
