#pragma once
// Adam with decoupled weight decay. Decay multiplies values directly by
// (1 - lr*wd) before the moment update; it is never folded into gradients.

#include <cmath>
#include <cstdint>
#include <vector>

#include "racm/nn/param.hpp"

namespace racm::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double base_lr = 1e-3;
};

template <typename T>
class AdamState {
 public:
  AdamState(const ParamSet<T>& params, AdamConfig cfg) : cfg_(cfg) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.emplace_back(p.size(), T(0));
      v_.emplace_back(p.size(), T(0));
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return t_; }

  // One update from the gradients currently held in params, at the given
  // learning rate (callers drive lr from the schedule).
  void step(ParamSet<T>& params, double lr) {
    t_ += 1;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T decay_mul = static_cast<T>(1.0 - lr * cfg_.weight_decay);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      auto& m = m_[i];
      auto& v = v_[i];
      for (std::size_t e = 0; e < p.size(); ++e) {
        if (cfg_.weight_decay != 0.0) p.value[e] *= decay_mul;
        const T g = p.grad[e];
        m[e] = static_cast<T>(cfg_.beta1) * m[e] +
               static_cast<T>(1.0 - cfg_.beta1) * g;
        v[e] = static_cast<T>(cfg_.beta2) * v[e] +
               static_cast<T>(1.0 - cfg_.beta2) * g * g;
        const double mhat = static_cast<double>(m[e]) / bc1;
        const double vhat = static_cast<double>(v[e]) / bc2;
        p.value[e] -=
            static_cast<T>(lr * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

 private:
  AdamConfig cfg_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

}  // namespace racm::nn
