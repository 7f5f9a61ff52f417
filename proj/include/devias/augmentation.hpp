#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "devias/rng.hpp"
#include "devias/world.hpp"

namespace devias {

enum class MaskSource { ground_truth, motion_estimate };

struct AugConfig {
  double tau = 0.3;  // foreground-ratio threshold for motion masks
  double rho = 0.4;  // fraction of a batch that gets its scene swapped
  MaskSource mask_source = MaskSource::ground_truth;
  double be_weight_max = 0.3;

  void validate() const {
    if (tau <= 0.0 || tau > 1.0) throw UsageError("tau must be in (0,1]");
    if (rho < 0.0 || rho > 1.0) throw UsageError("rho must be in [0,1]");
  }
};

// Training-free foreground estimate: per-pixel motion score is the max
// absolute difference across consecutive frames; the top tau fraction of
// pixels by score (ties by pixel index) is foreground, replicated over frames.
inline std::vector<uint8_t> extract_motion_mask(const VideoClip& clip, double tau) {
  const int64_t t2 = clip.frames.extent(0);
  const int64_t h = clip.frames.extent(1);
  const int64_t w = clip.frames.extent(2);
  const int64_t c = clip.frames.extent(3);
  if (t2 < 2) throw UsageError("motion mask needs at least 2 frames");
  const int64_t px = h * w;
  std::vector<float> score(px, 0.f);
  for (int64_t t = 0; t + 1 < t2; ++t) {
    const float* a = clip.frames.data() + t * px * c;
    const float* b = clip.frames.data() + (t + 1) * px * c;
    for (int64_t i = 0; i < px; ++i)
      for (int64_t ch = 0; ch < c; ++ch)
        score[i] = std::max(score[i], std::abs(b[i * c + ch] - a[i * c + ch]));
  }
  int64_t count = static_cast<int64_t>(std::llround(tau * static_cast<double>(px)));
  count = std::min(px, std::max<int64_t>(0, count));
  std::vector<int64_t> order(px);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int64_t a, int64_t b) {
    return score[a] > score[b];
  });
  std::vector<uint8_t> plane(px, 0);
  for (int64_t i = 0; i < count; ++i) plane[order[i]] = 1;
  std::vector<uint8_t> mask(static_cast<size_t>(t2) * px);
  for (int64_t t = 0; t < t2; ++t)
    std::copy(plane.begin(), plane.end(), mask.begin() + t * px);
  return mask;
}

// Cut-and-paste: keep the donor's foreground pixels, take everything else
// from the partner. Pure selection, so on- and off-support pixels are
// bit-exact copies.
inline VideoClip scene_swap(const VideoClip& v_i, const VideoClip& v_j,
                            const std::vector<uint8_t>& mask_i) {
  if (!v_i.frames.same_shape(v_j.frames))
    throw ShapeError("scene_swap: clip geometry mismatch");
  const int64_t t2 = v_i.frames.extent(0);
  const int64_t px = v_i.frames.extent(1) * v_i.frames.extent(2);
  const int64_t c = v_i.frames.extent(3);
  if (static_cast<int64_t>(mask_i.size()) != t2 * px)
    throw ShapeError("scene_swap: mask length mismatch");
  VideoClip out;
  out.frames = Tensor<float>(v_i.frames.shape());
  for (int64_t i = 0; i < t2 * px; ++i) {
    const float* src = mask_i[i] ? v_i.frames.data() : v_j.frames.data();
    for (int64_t ch = 0; ch < c; ++ch)
      out.frames[i * c + ch] = src[i * c + ch];
  }
  out.fg_mask = v_i.fg_mask;
  out.action_id = v_i.action_id;
  out.scene_id = v_j.scene_id;  // the visible background is the partner's
  out.provenance = Provenance::scene_swapped;
  return out;
}

// Replaces a floor(rho * B) subset (chosen by the rng) with scene swaps
// against a random distinct partner's original frames. Returns the indices
// of the swapped clips so the caller can refresh their soft scene labels.
inline std::vector<int> apply_batch_aug(
    std::vector<VideoClip>& batch,
    const std::vector<const std::vector<uint8_t>*>& masks, double rho,
    Rng& rng) {
  const int b = static_cast<int>(batch.size());
  const int n_aug = static_cast<int>(rho * b);
  if (n_aug == 0) return {};
  if (b < 2) throw UsageError("apply_batch_aug needs a batch of at least 2");
  std::vector<int> idx(b);
  std::iota(idx.begin(), idx.end(), 0);
  for (int t = 0; t < n_aug; ++t) {
    const int j = t + static_cast<int>(rng.uniform_int(b - t));
    std::swap(idx[t], idx[j]);
  }
  std::vector<int> chosen(idx.begin(), idx.begin() + n_aug);
  std::vector<VideoClip> donors(batch.begin(), batch.end());
  for (int i : chosen) {
    int partner = static_cast<int>(rng.uniform_int(b - 1));
    if (partner >= i) ++partner;
    batch[i] = scene_swap(donors[i], donors[partner], *masks[i]);
  }
  return chosen;
}

// Mixes one randomly chosen frame of the clip into every frame with a small
// uniform weight; labels and masks are unchanged.
inline VideoClip be_mix(const VideoClip& clip, Rng& rng, double weight_max = 0.3) {
  const int64_t t2 = clip.frames.extent(0);
  const int64_t stride = clip.frames.numel() / t2;
  const int64_t r = static_cast<int64_t>(rng.uniform_int(t2));
  const float lambda = static_cast<float>(rng.uniform(0.0, weight_max));
  VideoClip out = clip;
  const float* ref = clip.frames.data() + r * stride;
  for (int64_t t = 0; t < t2; ++t) {
    float* dst = out.frames.data() + t * stride;
    const float* src = clip.frames.data() + t * stride;
    for (int64_t i = 0; i < stride; ++i)
      dst[i] = (1.f - lambda) * src[i] + lambda * ref[i];
  }
  out.provenance = Provenance::be_mixed;
  return out;
}

}  // namespace devias
