#pragma once

#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "devias/errors.hpp"
#include "devias/tape.hpp"
#include "devias/tensor.hpp"

namespace devias {

// Owns every learnable parameter of a model, addressable by name. Insertion
// order is stable (moments in OptState align to it); serialization sorts by
// name.
template <typename S>
class ParamSet {
 public:
  Param<S>& add(std::string name, Tensor<S> init, int group = 0) {
    if (by_name_.count(name))
      throw UsageError("duplicate parameter name: " + name);
    params_.emplace_back(std::move(name), std::move(init), group);
    Param<S>& p = params_.back();
    by_name_[p.name] = &p;
    return p;
  }

  Param<S>* find(const std::string& name) {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  void zero_grads() {
    for (auto& p : params_)
      std::fill(p.grad.vec().begin(), p.grad.vec().end(), S(0));
  }

  size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  Param<S>& at(size_t i) { return params_[i]; }
  const Param<S>& at(size_t i) const { return params_[i]; }

  int64_t total_scalars() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  // name-sorted view, the canonical order for checkpoints
  std::vector<const Param<S>*> sorted() const {
    std::vector<const Param<S>*> out;
    out.reserve(params_.size());
    for (const auto& p : params_) out.push_back(&p);
    std::sort(out.begin(), out.end(),
              [](const Param<S>* a, const Param<S>* b) { return a->name < b->name; });
    return out;
  }

 private:
  std::deque<Param<S>> params_;
  std::map<std::string, Param<S>*> by_name_;
};

struct AdamWConfig {
  double base_lr = 3e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// AdamW with decoupled weight decay and per-group rate multipliers.
template <typename S>
class OptState {
 public:
  OptState(const ParamSet<S>& params, AdamWConfig cfg,
           std::vector<double> group_scale)
      : cfg_(cfg), group_scale_(std::move(group_scale)) {
    if (group_scale_.empty()) group_scale_.push_back(1.0);
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.value.shape());
      v_.emplace_back(p.value.shape());
    }
  }

  int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  double group_scale(int g) const {
    return g < static_cast<int>(group_scale_.size()) ? group_scale_[g] : 1.0;
  }

  void step(ParamSet<S>& params, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (size_t pi = 0; pi < params.size(); ++pi) {
      Param<S>& p = params.at(pi);
      const double g_lr = lr * group_scale(p.group);
      Tensor<S>& m = m_[pi];
      Tensor<S>& v = v_[pi];
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        const double g = static_cast<double>(p.grad[i]);
        const double mi = cfg_.beta1 * static_cast<double>(m[i]) + (1.0 - cfg_.beta1) * g;
        const double vi = cfg_.beta2 * static_cast<double>(v[i]) + (1.0 - cfg_.beta2) * g * g;
        m[i] = static_cast<S>(mi);
        v[i] = static_cast<S>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        const double x = static_cast<double>(p.value[i]);
        p.value[i] = static_cast<S>(
            x - g_lr * (mhat / (std::sqrt(vhat) + cfg_.eps)) -
            g_lr * cfg_.weight_decay * x);
      }
    }
  }

 private:
  AdamWConfig cfg_;
  std::vector<double> group_scale_;
  std::vector<Tensor<S>> m_;
  std::vector<Tensor<S>> v_;
  int64_t step_ = 0;
};

// Linear warmup to base_rate, then half-cosine decay to zero.
inline double cosine_lr(int64_t step, int64_t warmup_steps, int64_t total_steps,
                        double base_rate) {
  if (step < 0 || step > total_steps)
    throw UsageError("cosine_lr: step out of range");
  if (warmup_steps >= total_steps)
    throw UsageError("cosine_lr: warmup must be shorter than total");
  if (step <= warmup_steps) {
    if (warmup_steps == 0) return base_rate;
    return base_rate * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  const double progress = static_cast<double>(step - warmup_steps) /
                          static_cast<double>(total_steps - warmup_steps);
  return base_rate * 0.5 * (1.0 + std::cos(3.141592653589793 * progress));
}

}  // namespace devias
