#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "devias/errors.hpp"
#include "devias/world.hpp"

namespace devias {

static_assert(std::endian::native == std::endian::little,
              "DVSW1/DVCK1 writers assume a little-endian host");

struct Dataset {
  uint16_t n_actions = 0;
  uint16_t n_scenes = 0;
  uint16_t frames = 0;  // 2T
  uint16_t height = 0;
  uint16_t width = 0;
  uint16_t channels = 0;
  std::vector<VideoClip> clips;

  static Dataset from(const WorldConfig& cfg, std::vector<VideoClip> clips) {
    Dataset d;
    d.n_actions = static_cast<uint16_t>(cfg.n_actions);
    d.n_scenes = static_cast<uint16_t>(cfg.n_scenes);
    d.frames = static_cast<uint16_t>(cfg.frames);
    d.height = static_cast<uint16_t>(cfg.height);
    d.width = static_cast<uint16_t>(cfg.width);
    d.channels = static_cast<uint16_t>(cfg.channels);
    d.clips = std::move(clips);
    return d;
  }

  int64_t pixels_per_clip() const {
    return static_cast<int64_t>(frames) * height * width;
  }
};

namespace ioutil {

template <typename T>
void write_pod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is, const char* what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError(std::string("truncated file while reading ") + what);
  return v;
}

}  // namespace ioutil

inline constexpr char kDvswMagic[5] = {'D', 'V', 'S', 'W', '1'};
inline constexpr uint32_t kDvswVersion = 1;

inline void write_dvsw1(const std::string& path, const Dataset& d) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os.write(kDvswMagic, 5);
  ioutil::write_pod<uint32_t>(os, kDvswVersion);
  ioutil::write_pod<uint32_t>(os, static_cast<uint32_t>(d.clips.size()));
  ioutil::write_pod<uint16_t>(os, d.n_actions);
  ioutil::write_pod<uint16_t>(os, d.n_scenes);
  ioutil::write_pod<uint16_t>(os, d.frames);
  ioutil::write_pod<uint16_t>(os, d.height);
  ioutil::write_pod<uint16_t>(os, d.width);
  ioutil::write_pod<uint16_t>(os, d.channels);
  const int64_t px = d.pixels_per_clip();
  const int64_t mask_bytes = (px + 7) / 8;
  std::vector<uint8_t> packed(mask_bytes);
  for (const VideoClip& c : d.clips) {
    ioutil::write_pod<uint8_t>(os, c.action_id);
    ioutil::write_pod<uint8_t>(os, c.scene_id);
    ioutil::write_pod<uint8_t>(os, static_cast<uint8_t>(c.provenance));
    os.write(reinterpret_cast<const char*>(c.frames.data()),
             static_cast<std::streamsize>(c.frames.numel() * sizeof(float)));
    std::fill(packed.begin(), packed.end(), 0);
    for (int64_t i = 0; i < px; ++i)
      if (c.fg_mask[i]) packed[i >> 3] |= static_cast<uint8_t>(1u << (i & 7));
    os.write(reinterpret_cast<const char*>(packed.data()), mask_bytes);
  }
  if (!os) throw FormatError("write failed: " + path);
}

inline Dataset read_dvsw1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kDvswMagic, 5) != 0)
    throw FormatError("not a DVSW1 file: " + path);
  const auto version = ioutil::read_pod<uint32_t>(is, "version");
  if (version != kDvswVersion)
    throw FormatError("unsupported DVSW1 version " + std::to_string(version));
  const auto count = ioutil::read_pod<uint32_t>(is, "clip count");
  Dataset d;
  d.n_actions = ioutil::read_pod<uint16_t>(is, "n_actions");
  d.n_scenes = ioutil::read_pod<uint16_t>(is, "n_scenes");
  d.frames = ioutil::read_pod<uint16_t>(is, "frames");
  d.height = ioutil::read_pod<uint16_t>(is, "height");
  d.width = ioutil::read_pod<uint16_t>(is, "width");
  d.channels = ioutil::read_pod<uint16_t>(is, "channels");
  const int64_t px = d.pixels_per_clip();
  const int64_t mask_bytes = (px + 7) / 8;
  const int64_t values = px * d.channels;
  std::vector<uint8_t> packed(mask_bytes);
  d.clips.resize(count);
  for (uint32_t ci = 0; ci < count; ++ci) {
    VideoClip& c = d.clips[ci];
    c.action_id = ioutil::read_pod<uint8_t>(is, "action");
    c.scene_id = ioutil::read_pod<uint8_t>(is, "scene");
    c.provenance = static_cast<Provenance>(ioutil::read_pod<uint8_t>(is, "provenance"));
    c.frames = Tensor<float>({d.frames, d.height, d.width, d.channels});
    is.read(reinterpret_cast<char*>(c.frames.data()),
            static_cast<std::streamsize>(values * sizeof(float)));
    is.read(reinterpret_cast<char*>(packed.data()), mask_bytes);
    if (!is) throw FormatError("truncated clip " + std::to_string(ci));
    c.fg_mask.resize(px);
    for (int64_t i = 0; i < px; ++i)
      c.fg_mask[i] = (packed[i >> 3] >> (i & 7)) & 1u;
  }
  return d;
}

}  // namespace devias
