#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>

#include "devias/dataset_io.hpp"
#include "devias/optim.hpp"

namespace devias {

inline constexpr char kDvckMagic[5] = {'D', 'V', 'C', 'K', '1'};
inline constexpr uint32_t kDvckVersion = 1;

struct CheckpointData {
  std::map<std::string, Tensor<float>> blobs;  // name-sorted by construction
  std::string config_text;
  uint64_t step = 0;
  std::string rng_state;
};

// Blobs sorted by name, then a footer carrying the config echo, the step
// counter, and the rng state.
inline void write_dvck1(const std::string& path, const CheckpointData& ck) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + path);
  os.write(kDvckMagic, 5);
  ioutil::write_pod<uint32_t>(os, kDvckVersion);
  ioutil::write_pod<uint32_t>(os, static_cast<uint32_t>(ck.blobs.size()));
  for (const auto& [name, tensor] : ck.blobs) {
    ioutil::write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    ioutil::write_pod<uint32_t>(os, static_cast<uint32_t>(tensor.rank()));
    for (int64_t e : tensor.shape())
      ioutil::write_pod<uint32_t>(os, static_cast<uint32_t>(e));
    os.write(reinterpret_cast<const char*>(tensor.data()),
             static_cast<std::streamsize>(tensor.numel() * sizeof(float)));
  }
  ioutil::write_pod<uint32_t>(os, static_cast<uint32_t>(ck.config_text.size()));
  os.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  ioutil::write_pod<uint64_t>(os, ck.step);
  ioutil::write_pod<uint32_t>(os, static_cast<uint32_t>(ck.rng_state.size()));
  os.write(ck.rng_state.data(), static_cast<std::streamsize>(ck.rng_state.size()));
  if (!os) throw FormatError("write failed: " + path);
}

inline CheckpointData read_dvck1(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open: " + path);
  char magic[5];
  is.read(magic, 5);
  if (!is || std::memcmp(magic, kDvckMagic, 5) != 0)
    throw FormatError("not a DVCK1 file: " + path);
  const auto version = ioutil::read_pod<uint32_t>(is, "version");
  if (version != kDvckVersion)
    throw FormatError("unsupported DVCK1 version " + std::to_string(version));
  const auto count = ioutil::read_pod<uint32_t>(is, "blob count");
  CheckpointData ck;
  for (uint32_t i = 0; i < count; ++i) {
    const auto name_len = ioutil::read_pod<uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const auto rank = ioutil::read_pod<uint32_t>(is, "rank");
    Shape shape(rank);
    for (uint32_t r = 0; r < rank; ++r)
      shape[r] = ioutil::read_pod<uint32_t>(is, "extent");
    Tensor<float> t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!is) throw FormatError("truncated blob " + name);
    ck.blobs.emplace(std::move(name), std::move(t));
  }
  const auto cfg_len = ioutil::read_pod<uint32_t>(is, "config length");
  ck.config_text.resize(cfg_len);
  is.read(ck.config_text.data(), cfg_len);
  ck.step = ioutil::read_pod<uint64_t>(is, "step");
  const auto rng_len = ioutil::read_pod<uint32_t>(is, "rng length");
  ck.rng_state.resize(rng_len);
  is.read(ck.rng_state.data(), rng_len);
  if (!is) throw FormatError("truncated footer in " + path);
  return ck;
}

template <typename S>
CheckpointData checkpoint_of(const ParamSet<S>& params, std::string config_text,
                             uint64_t step, std::string rng_state) {
  CheckpointData ck;
  for (const Param<S>* p : params.sorted())
    ck.blobs.emplace(p->name, p->value.template cast<float>());
  ck.config_text = std::move(config_text);
  ck.step = step;
  ck.rng_state = std::move(rng_state);
  return ck;
}

// Strict application: every parameter must be present with a matching shape,
// and no unknown blobs may remain.
template <typename S>
void apply_checkpoint(ParamSet<S>& params, const CheckpointData& ck) {
  size_t used = 0;
  for (Param<S>& p : params) {
    auto it = ck.blobs.find(p.name);
    if (it == ck.blobs.end())
      throw FormatError("checkpoint is missing parameter: " + p.name);
    if (it->second.shape() != p.value.shape())
      throw FormatError("checkpoint shape mismatch for " + p.name);
    p.value = it->second.template cast<S>();
    ++used;
  }
  if (used != ck.blobs.size())
    throw FormatError("checkpoint carries unknown parameters");
}

}  // namespace devias
