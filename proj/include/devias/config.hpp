#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "devias/augmentation.hpp"
#include "devias/encoder.hpp"
#include "devias/errors.hpp"
#include "devias/objectives.hpp"
#include "devias/slots.hpp"
#include "devias/teacher.hpp"
#include "devias/world.hpp"

namespace devias {

enum class ModelKind { devias, one_token, two_token, two_token_unified };

inline ModelKind model_kind_from(const std::string& s) {
  if (s == "devias") return ModelKind::devias;
  if (s == "one_token") return ModelKind::one_token;
  if (s == "two_token") return ModelKind::two_token;
  if (s == "two_token_unified") return ModelKind::two_token_unified;
  throw UsageError("unknown model: " + s +
                   " (expected devias|one_token|two_token|two_token_unified)");
}

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::devias: return "devias";
    case ModelKind::one_token: return "one_token";
    case ModelKind::two_token: return "two_token";
    default: return "two_token_unified";
  }
}

// Every knob of a run, flat. Files use `key = value` lines; command-line
// flags override file values; the same text round-trips through checkpoints.
struct RunConfig {
  std::string model = "devias";
  uint64_t seed = 0;
  int threads = 1;

  // world
  int actions = 4, scenes = 4, frames = 8, height = 32, width = 32, channels = 1;
  double corr = 0.9;
  int train_clips = 2000, test_clips = 400;
  int teacher_train_clips = 1000, teacher_val_clips = 400;

  // encoder
  int dim = 64, heads = 4, depth = 3, patch = 8;

  // disentangle module
  int slots = 2, slot_iters = 4;

  // loss weights
  double alpha = 1.0, beta = 1.0, gamma = 1.0;

  // augmentation
  std::string aug = "auto";  // auto|none|scene_swap|be
  double tau = 0.3, rho = 0.4, be_weight_max = 0.3;
  std::string mask_source = "ground_truth";  // ground_truth|motion_estimate

  // training
  int epochs = 30, batch = 16;
  double base_lr = 3e-4;
  int warmup_epochs = 3;
  double weight_decay = 0.05;
  double layer_decay = 0.75;
  bool layer_decay_enabled = true;
  double slot_lr_scale = 0.1;

  // scene teacher
  int teacher_dim = 32, teacher_depth = 2, teacher_heads = 4;
  int teacher_epochs = 12, teacher_batch = 16, teacher_warmup = 1;
  double teacher_lr = 1e-3;
};

namespace detail {

template <typename F>
void visit_fields(RunConfig& c, F&& f) {
  f("model", c.model);
  f("seed", c.seed);
  f("threads", c.threads);
  f("actions", c.actions);
  f("scenes", c.scenes);
  f("frames", c.frames);
  f("height", c.height);
  f("width", c.width);
  f("channels", c.channels);
  f("corr", c.corr);
  f("train_clips", c.train_clips);
  f("test_clips", c.test_clips);
  f("teacher_train_clips", c.teacher_train_clips);
  f("teacher_val_clips", c.teacher_val_clips);
  f("dim", c.dim);
  f("heads", c.heads);
  f("depth", c.depth);
  f("patch", c.patch);
  f("slots", c.slots);
  f("slot_iters", c.slot_iters);
  f("alpha", c.alpha);
  f("beta", c.beta);
  f("gamma", c.gamma);
  f("aug", c.aug);
  f("tau", c.tau);
  f("rho", c.rho);
  f("be_weight_max", c.be_weight_max);
  f("mask_source", c.mask_source);
  f("epochs", c.epochs);
  f("batch", c.batch);
  f("base_lr", c.base_lr);
  f("warmup_epochs", c.warmup_epochs);
  f("weight_decay", c.weight_decay);
  f("layer_decay", c.layer_decay);
  f("layer_decay_enabled", c.layer_decay_enabled);
  f("slot_lr_scale", c.slot_lr_scale);
  f("teacher_dim", c.teacher_dim);
  f("teacher_depth", c.teacher_depth);
  f("teacher_heads", c.teacher_heads);
  f("teacher_epochs", c.teacher_epochs);
  f("teacher_batch", c.teacher_batch);
  f("teacher_warmup", c.teacher_warmup);
  f("teacher_lr", c.teacher_lr);
}

inline void assign_field(std::string& dst, const std::string& v) { dst = v; }
inline void assign_field(bool& dst, const std::string& v) {
  if (v == "true" || v == "1") dst = true;
  else if (v == "false" || v == "0") dst = false;
  else throw UsageError("expected a boolean, got: " + v);
}
inline void assign_field(int& dst, const std::string& v) {
  size_t pos = 0;
  dst = std::stoi(v, &pos);
  if (pos != v.size()) throw UsageError("expected an integer, got: " + v);
}
inline void assign_field(uint64_t& dst, const std::string& v) {
  size_t pos = 0;
  dst = std::stoull(v, &pos);
  if (pos != v.size()) throw UsageError("expected an integer, got: " + v);
}
inline void assign_field(double& dst, const std::string& v) {
  size_t pos = 0;
  dst = std::stod(v, &pos);
  if (pos != v.size()) throw UsageError("expected a number, got: " + v);
}

inline std::string field_str(const std::string& v) { return v; }
inline std::string field_str(bool v) { return v ? "true" : "false"; }
inline std::string field_str(int v) { return std::to_string(v); }
inline std::string field_str(uint64_t v) { return std::to_string(v); }
inline std::string field_str(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline void set_config_key(RunConfig& cfg, const std::string& key,
                           const std::string& value) {
  bool found = false;
  detail::visit_fields(cfg, [&](const char* name, auto& field) {
    if (key == name) {
      detail::assign_field(field, value);
      found = true;
    }
  });
  if (!found) throw UsageError("unknown config key: " + key);
}

inline std::string config_to_text(const RunConfig& cfg) {
  std::ostringstream os;
  detail::visit_fields(const_cast<RunConfig&>(cfg),
                       [&](const char* name, auto& field) {
                         os << name << " = " << detail::field_str(field) << "\n";
                       });
  return os.str();
}

inline RunConfig config_from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("config line " + std::to_string(lineno) +
                       " is not key = value");
    set_config_key(cfg, detail::trim(line.substr(0, eq)),
                   detail::trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw UsageError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return config_from_text(ss.str());
}

// ---- converters to module configs ----

inline WorldConfig world_config(const RunConfig& c) {
  WorldConfig w;
  w.n_actions = c.actions;
  w.n_scenes = c.scenes;
  w.frames = c.frames;
  w.height = c.height;
  w.width = c.width;
  w.channels = c.channels;
  w.corr = c.corr;
  w.n_train = c.train_clips;
  w.n_test = c.test_clips;
  w.n_teacher_train = c.teacher_train_clips;
  w.n_teacher_val = c.teacher_val_clips;
  w.seed = c.seed;
  return w;
}

inline EncoderConfig encoder_config(const RunConfig& c, int prefix_tokens = 0) {
  EncoderConfig e;
  e.dim = c.dim;
  e.heads = c.heads;
  e.depth = c.depth;
  e.patch = c.patch;
  e.frames = c.frames;
  e.height = c.height;
  e.width = c.width;
  e.channels = c.channels;
  e.prefix_tokens = prefix_tokens;
  return e;
}

inline EncoderConfig teacher_encoder_config(const RunConfig& c) {
  EncoderConfig e = encoder_config(c);
  e.dim = c.teacher_dim;
  e.heads = c.teacher_heads;
  e.depth = c.teacher_depth;
  return e;
}

inline SlotConfig slot_config(const RunConfig& c) {
  SlotConfig s;
  s.num_slots = c.slots;
  s.iters = c.slot_iters;
  s.dim = c.dim;
  return s;
}

inline HeadConfig head_config(const RunConfig& c) {
  HeadConfig h;
  h.dim = c.dim;
  h.n_actions = c.actions;
  h.n_scenes = c.scenes;
  h.mask_tokens = static_cast<int>(encoder_config(c).spatial_tokens());
  return h;
}

inline AugConfig aug_config(const RunConfig& c) {
  AugConfig a;
  a.tau = c.tau;
  a.rho = c.rho;
  a.be_weight_max = c.be_weight_max;
  if (c.mask_source == "ground_truth") a.mask_source = MaskSource::ground_truth;
  else if (c.mask_source == "motion_estimate") a.mask_source = MaskSource::motion_estimate;
  else throw UsageError("mask_source must be ground_truth or motion_estimate");
  return a;
}

enum class AugKind { none, scene_swap, be };

inline AugKind resolve_aug(const RunConfig& c) {
  if (c.aug == "none") return AugKind::none;
  if (c.aug == "scene_swap") return AugKind::scene_swap;
  if (c.aug == "be") return AugKind::be;
  if (c.aug == "auto")
    return model_kind_from(c.model) == ModelKind::devias ? AugKind::scene_swap
                                                         : AugKind::none;
  throw UsageError("aug must be auto, none, scene_swap, or be");
}

inline TeacherHyper teacher_hyper(const RunConfig& c) {
  TeacherHyper t;
  t.epochs = c.teacher_epochs;
  t.batch = c.teacher_batch;
  t.base_lr = c.teacher_lr;
  t.warmup_epochs = c.teacher_warmup;
  t.weight_decay = c.weight_decay;
  return t;
}

inline LossWeights loss_weights(const RunConfig& c) {
  return LossWeights{c.alpha, c.beta, c.gamma};
}

inline void validate_run_config(const RunConfig& c) {
  world_config(c).validate();
  encoder_config(c).validate();
  (void)model_kind_from(c.model);
  (void)resolve_aug(c);
  (void)aug_config(c);
  if (c.epochs < 1) throw UsageError("epochs must be at least 1");
  if (c.warmup_epochs >= c.epochs)
    throw UsageError("warmup must be shorter than training");
  if (c.batch < 2 && resolve_aug(c) == AugKind::scene_swap && c.rho > 0)
    throw UsageError("scene swap needs a batch of at least 2");
  if (model_kind_from(c.model) == ModelKind::devias && c.slots < 2)
    throw UsageError("the slot model needs at least 2 slots");
  if (c.threads < 1) throw UsageError("threads must be at least 1");
}

}  // namespace devias
