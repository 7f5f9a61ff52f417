#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "devias/errors.hpp"
#include "devias/rng.hpp"
#include "devias/tensor.hpp"

namespace devias {

enum class Provenance : uint8_t {
  generated = 0,
  scene_swapped = 1,
  scene_only = 2,
  be_mixed = 3,
};

struct VideoClip {
  Tensor<float> frames;          // [2T, H, W, C], values in [0, 1]
  std::vector<uint8_t> fg_mask;  // [2T * H * W], 1 on sprite pixels
  uint8_t action_id = 0;
  uint8_t scene_id = 0;
  Provenance provenance = Provenance::generated;
};

struct WorldConfig {
  int n_actions = 4;
  int n_scenes = 4;
  int frames = 8;  // 2T
  int height = 32;
  int width = 32;
  int channels = 1;
  double corr = 0.9;
  int n_train = 2000;
  int n_test = 400;          // per test split
  int n_teacher_train = 1000;
  int n_teacher_val = 400;
  uint64_t seed = 0;

  void validate() const {
    if (n_actions < 2 || n_scenes < 2)
      throw UsageError("world needs at least 2 actions and 2 scenes");
    if (n_actions > 4 || n_scenes > 8)
      throw UsageError("world supports at most 4 actions and 8 scenes");
    if (corr < 0.0 || corr > 1.0) throw UsageError("corr must be in [0,1]");
    if (frames % 2 != 0) throw UsageError("frame count must be even");
  }
};

namespace worldtag {
inline constexpr uint64_t kTrain = 1;
inline constexpr uint64_t kTestInContext = 2;
inline constexpr uint64_t kTestOutOfContext = 3;
inline constexpr uint64_t kTestSceneOnly = 4;
inline constexpr uint64_t kTeacherTrain = 5;
inline constexpr uint64_t kTeacherVal = 6;
inline constexpr uint64_t kScene = 101;
inline constexpr uint64_t kSprite = 102;
}  // namespace worldtag

inline constexpr int kSpriteSize = 8;
inline constexpr double kTwoPi = 6.283185307179586;

// One static grayscale texture per scene family. Each family owns a distinct
// intensity band (jittered per clip) with its pattern on top, so families are
// separable the way real scene classes are easy for a strong classifier, and
// every background stays darker than the sprite.
inline Tensor<float> render_scene(const WorldConfig& cfg, int scene_id,
                                  uint64_t clip_seed) {
  Rng rng(mix_seed(clip_seed, worldtag::kScene, static_cast<uint64_t>(scene_id)));
  const int h = cfg.height, w = cfg.width;
  const double span = cfg.n_scenes > 1 ? 0.47 / (cfg.n_scenes - 1) : 0.0;
  const double base = 0.15 + span * scene_id + rng.uniform(-0.03, 0.03);
  const double amp = rng.uniform(0.05, 0.08);
  Tensor<float> img({h, w});
  auto emit = [&](int y, int x, double v) {
    img(y, x) = static_cast<float>(std::min(0.72, std::max(0.02, v)));
  };
  switch (scene_id % 8) {
    case 0: {  // oriented stripes
      const double freq = rng.uniform(3.0, 5.0);
      const double theta = rng.uniform(0.0, kTwoPi);
      const double phase = rng.uniform(0.0, kTwoPi);
      const double cx = std::cos(theta), sx = std::sin(theta);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double u = (x * cx + y * sx) / w;
          emit(y, x, base + amp * std::sin(kTwoPi * freq * u + phase));
        }
      break;
    }
    case 1: {  // checkerboard
      const int cell = 3 + static_cast<int>(rng.uniform_int(3));
      const int ox = static_cast<int>(rng.uniform_int(cell));
      const int oy = static_cast<int>(rng.uniform_int(cell));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int par = ((x + ox) / cell + (y + oy) / cell) % 2;
          emit(y, x, base + (par ? amp : -amp));
        }
      break;
    }
    case 2: {  // linear gradient
      const double theta = rng.uniform(0.0, kTwoPi);
      const double cx = std::cos(theta), sx = std::sin(theta);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double u = (x * cx + y * sx) / std::sqrt(2.0 * w * w);
          emit(y, x, base + 2.0 * amp * u);
        }
      break;
    }
    case 3: {  // smooth blob noise: bilinear upsample of a coarse random grid
      const int g = 4;
      std::vector<double> grid((g + 1) * (g + 1));
      for (auto& v : grid) v = base + rng.uniform(-amp, amp);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double fy = static_cast<double>(y) * g / h;
          const double fx = static_cast<double>(x) * g / w;
          const int iy = static_cast<int>(fy), ix = static_cast<int>(fx);
          const double ay = fy - iy, ax = fx - ix;
          const double v00 = grid[iy * (g + 1) + ix];
          const double v01 = grid[iy * (g + 1) + ix + 1];
          const double v10 = grid[(iy + 1) * (g + 1) + ix];
          const double v11 = grid[(iy + 1) * (g + 1) + ix + 1];
          emit(y, x, (1 - ay) * ((1 - ax) * v00 + ax * v01) +
                         ay * ((1 - ax) * v10 + ax * v11));
        }
      break;
    }
    case 4: {  // dot lattice
      const int cell = 5 + static_cast<int>(rng.uniform_int(3));
      const int r = 1 + static_cast<int>(rng.uniform_int(2));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const int dy = y % cell - cell / 2;
          const int dx = x % cell - cell / 2;
          emit(y, x, base + (dy * dy + dx * dx <= r * r ? amp : -amp));
        }
      break;
    }
    case 5: {  // concentric rings
      const double cyc = rng.uniform(0.08, 0.14);
      const double cy = h / 2.0 + rng.uniform(-4.0, 4.0);
      const double cx2 = w / 2.0 + rng.uniform(-4.0, 4.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double r = std::hypot(y - cy, x - cx2);
          emit(y, x, base + amp * std::sin(kTwoPi * cyc * r));
        }
      break;
    }
    case 6: {  // diagonal square wave
      const int period = 4 + static_cast<int>(rng.uniform_int(4));
      const int off = static_cast<int>(rng.uniform_int(period));
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          emit(y, x, base + (((x + y + off) / period) % 2 ? amp : -amp));
      break;
    }
    default: {  // speckle on a flat base
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) emit(y, x, base + rng.uniform(-amp, amp));
      break;
    }
  }
  return img;
}

struct SpriteTrack {
  std::vector<int> xs, ys;    // box top-left corner per frame
  std::vector<int> pox, poy;  // pattern scroll offset per frame (mod sprite size)
  Tensor<float> pattern;      // [s, s] sprite texture, constant per clip
};

namespace detail {
inline double tri01(double p) {
  p -= std::floor(p);
  return p < 0.5 ? 2.0 * p : 2.0 * (1.0 - p);
}
inline int wrap(int v, int m) { return ((v % m) + m) % m; }
}  // namespace detail

// Actions are trajectories. The box drifts gently around a jittered anchor
// (so the motion trail stays compact, like an actor moving in place) while
// the sprite's texture scrolls along the same trajectory with a larger
// amplitude, giving a strong directional flow inside the mask. The anchor
// and appearance carry no class information.
inline SpriteTrack render_sprite_track(const WorldConfig& cfg, int action_id,
                                       uint64_t clip_seed) {
  Rng rng(mix_seed(clip_seed, worldtag::kSprite, static_cast<uint64_t>(action_id)));
  const int s = kSpriteSize;
  const int t2 = cfg.frames;
  const int xmax = cfg.width - s, ymax = cfg.height - s;

  SpriteTrack track;
  track.pattern = Tensor<float>({s, s});
  const double base = rng.uniform(0.84, 0.90);
  for (int i = 0; i < s * s; ++i)
    track.pattern[i] = static_cast<float>(
        std::min(1.0, std::max(0.73, base + rng.uniform(-0.11, 0.11))));

  const double phase = rng.uniform(0.0, 1.0);
  const double speed = rng.uniform(1.1, 1.6);  // oscillation periods per clip
  const double dir = rng.uniform() < 0.5 ? 1.0 : -1.0;
  const double amp = rng.uniform(1.5, 2.2);
  const double scroll = rng.uniform(2.4, 3.2);  // texture amplitude over box amplitude
  const int margin = static_cast<int>(std::ceil(amp));
  // anchors jitter around the frame center, actor-style; the sprite never
  // pins class information to a screen position
  auto anchor = [&](int limit) {
    const int lo = std::min(margin, limit);
    const int hi = std::max(lo, limit - margin);
    const int center = limit / 2;
    const int lo2 = std::max(lo, center - 3);
    const int hi2 = std::min(hi, center + 3);
    return lo2 + static_cast<int>(rng.uniform_int(hi2 - lo2 + 1));
  };
  const int ax = anchor(xmax);
  const int ay = anchor(ymax);

  track.xs.resize(t2);
  track.ys.resize(t2);
  track.pox.resize(t2);
  track.poy.resize(t2);
  // per-frame trajectory offsets in box units; the texture scroll amplifies them
  auto place = [&](int t, double ox, double oy) {
    track.xs[t] = std::min(xmax, std::max(0, ax + static_cast<int>(std::lround(ox))));
    track.ys[t] = std::min(ymax, std::max(0, ay + static_cast<int>(std::lround(oy))));
    track.pox[t] = detail::wrap(static_cast<int>(std::lround(scroll * ox)), s);
    track.poy[t] = detail::wrap(static_cast<int>(std::lround(scroll * oy)), s);
  };
  auto wave = [&](double p) { return amp * (2.0 * detail::tri01(p) - 1.0); };

  switch (action_id % 4) {
    case 0:  // horizontal oscillation
      for (int t = 0; t < t2; ++t)
        place(t, wave(phase + dir * speed * t / t2), 0.0);
      break;
    case 1:  // vertical oscillation
      for (int t = 0; t < t2; ++t)
        place(t, 0.0, wave(phase + dir * speed * t / t2));
      break;
    case 2: {  // diagonal oscillation, x and y in phase
      const double flip = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double a2 = 0.71;  // per-axis share keeps the trail compact
      for (int t = 0; t < t2; ++t) {
        const double u = a2 * wave(phase + dir * speed * t / t2);
        place(t, u, flip * u);
      }
      break;
    }
    default: {  // circular orbit, x and y in quadrature
      const double w0 = rng.uniform(0.0, kTwoPi);
      const double r = amp * 0.55;
      for (int t = 0; t < t2; ++t) {
        const double a = w0 + dir * speed * kTwoPi * t / t2;
        place(t, r * std::cos(a), r * std::sin(a));
      }
      break;
    }
  }
  return track;
}

inline VideoClip generate_scene_only_clip(const WorldConfig& cfg, int scene_id,
                                          uint64_t seed) {
  if (scene_id < 0 || scene_id >= cfg.n_scenes)
    throw UsageError("scene id out of range");
  const int t2 = cfg.frames, h = cfg.height, w = cfg.width, c = cfg.channels;
  Tensor<float> scene = render_scene(cfg, scene_id, seed);
  VideoClip clip;
  clip.frames = Tensor<float>({t2, h, w, c});
  clip.fg_mask.assign(static_cast<size_t>(t2) * h * w, 0);
  for (int t = 0; t < t2; ++t)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch)
          clip.frames[((static_cast<int64_t>(t) * h + y) * w + x) * c + ch] =
              scene(y, x);
  clip.scene_id = static_cast<uint8_t>(scene_id);
  clip.provenance = Provenance::scene_only;
  return clip;
}

inline VideoClip generate_clip(const WorldConfig& cfg, int action_id,
                               int scene_id, uint64_t seed) {
  if (action_id < 0 || action_id >= cfg.n_actions)
    throw UsageError("action id out of range");
  VideoClip clip = generate_scene_only_clip(cfg, scene_id, seed);
  clip.action_id = static_cast<uint8_t>(action_id);
  clip.provenance = Provenance::generated;

  const SpriteTrack track = render_sprite_track(cfg, action_id, seed);
  const int t2 = cfg.frames, h = cfg.height, w = cfg.width, c = cfg.channels;
  const int s = kSpriteSize;
  for (int t = 0; t < t2; ++t) {
    const int x0 = track.xs[t], y0 = track.ys[t];
    for (int dy = 0; dy < s; ++dy)
      for (int dx = 0; dx < s; ++dx) {
        const int y = y0 + dy, x = x0 + dx;
        clip.fg_mask[(static_cast<int64_t>(t) * h + y) * w + x] = 1;
        const float v = track.pattern(detail::wrap(dy + track.poy[t], s),
                                      detail::wrap(dx + track.pox[t], s));
        for (int ch = 0; ch < c; ++ch)
          clip.frames[((static_cast<int64_t>(t) * h + y) * w + x) * c + ch] = v;
      }
  }
  return clip;
}

struct Splits {
  std::vector<VideoClip> train;
  std::vector<VideoClip> test_in_context;
  std::vector<VideoClip> test_out_of_context;
  std::vector<VideoClip> test_scene_only;
};

inline int partner_scene(int action_id, int n_scenes) {
  return action_id % n_scenes;
}

namespace detail {

inline VideoClip draw_correlated(const WorldConfig& cfg, uint64_t clip_seed) {
  Rng rng(clip_seed);
  const int action = static_cast<int>(rng.uniform_int(cfg.n_actions));
  int scene = partner_scene(action, cfg.n_scenes);
  if (rng.uniform() >= cfg.corr) {
    const int other = static_cast<int>(rng.uniform_int(cfg.n_scenes - 1));
    scene = other < scene ? other : other + 1;
  }
  return generate_clip(cfg, action, scene, clip_seed);
}

inline VideoClip draw_out_of_context(const WorldConfig& cfg, uint64_t clip_seed) {
  Rng rng(clip_seed);
  const int action = static_cast<int>(rng.uniform_int(cfg.n_actions));
  const int avoid = partner_scene(action, cfg.n_scenes);
  const int other = static_cast<int>(rng.uniform_int(cfg.n_scenes - 1));
  const int scene = other < avoid ? other : other + 1;
  return generate_clip(cfg, action, scene, clip_seed);
}

inline VideoClip draw_scene_only(const WorldConfig& cfg, uint64_t clip_seed) {
  Rng rng(clip_seed);
  const int scene = static_cast<int>(rng.uniform_int(cfg.n_scenes));
  return generate_scene_only_clip(cfg, scene, clip_seed);
}

}  // namespace detail

inline std::vector<VideoClip> make_scene_only_set(const WorldConfig& cfg,
                                                  int count, uint64_t tag) {
  std::vector<VideoClip> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i)
    out.push_back(detail::draw_scene_only(cfg, mix_seed(cfg.seed, tag, i)));
  return out;
}

inline Splits make_splits(const WorldConfig& cfg) {
  cfg.validate();
  Splits s;
  s.train.reserve(cfg.n_train);
  for (int i = 0; i < cfg.n_train; ++i)
    s.train.push_back(
        detail::draw_correlated(cfg, mix_seed(cfg.seed, worldtag::kTrain, i)));
  for (int i = 0; i < cfg.n_test; ++i) {
    s.test_in_context.push_back(detail::draw_correlated(
        cfg, mix_seed(cfg.seed, worldtag::kTestInContext, i)));
    s.test_out_of_context.push_back(detail::draw_out_of_context(
        cfg, mix_seed(cfg.seed, worldtag::kTestOutOfContext, i)));
    s.test_scene_only.push_back(detail::draw_scene_only(
        cfg, mix_seed(cfg.seed, worldtag::kTestSceneOnly, i)));
  }
  return s;
}

}  // namespace devias
