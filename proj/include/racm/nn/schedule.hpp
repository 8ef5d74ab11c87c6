#pragma once
// Linear warmup followed by cosine decay to zero.

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace racm::nn {

struct Schedule {
  std::uint64_t warmup_steps = 0;
  std::uint64_t total_steps = 0;
  double base_lr = 1e-3;
};

// Ramp: lr(s) = base * (s+1)/warmup for s < warmup, so lr(warmup-1) = base
// and the cosine segment starts at base — continuous at the boundary.
// Cosine: lr(s) = base * 0.5 * (1 + cos(pi * progress)) with progress over
// [warmup, total]; lr(total) = 0.
inline double lr_at(const Schedule& sched, std::uint64_t step) {
  if (sched.total_steps == 0 || step > sched.total_steps)
    throw std::invalid_argument("lr_at: step out of range");
  if (step < sched.warmup_steps) {
    return sched.base_lr * static_cast<double>(step + 1) /
           static_cast<double>(sched.warmup_steps);
  }
  const double span = static_cast<double>(sched.total_steps - sched.warmup_steps);
  if (span <= 0.0) return 0.0;
  const double progress = static_cast<double>(step - sched.warmup_steps) / span;
  return sched.base_lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * progress));
}

}  // namespace racm::nn
