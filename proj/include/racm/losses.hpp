#pragma once
// Training losses: smoothed softmax cross-entropy and logit adjustment for
// long-tailed class distributions.
//
// The adjustment tau * ln(count_c / N) is anchored at the most frequent
// class (its maximum is subtracted), which shifts every class by the same
// constant per sample. Softmax cross-entropy is invariant to such shifts,
// and the anchored form makes the balanced-counts case an exact no-op: the
// adjustment vector is identically zero and the logits pass through
// untouched, bit for bit.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "racm/nn/softmax.hpp"

namespace racm {

// Per-class logit adjustment, anchored at zero for the largest class:
// adj_c = tau * ln(count_c / max_count). All entries are <= 0; balanced
// counts give exact zeros.
template <typename T>
inline std::vector<T> lace_adjustment(std::span<const std::uint32_t> class_counts,
                                      double tau) {
  if (tau < 0.0) throw std::invalid_argument("lace: tau must be >= 0");
  std::vector<T> adj(class_counts.size(), T(0));
  if (tau == 0.0) return adj;
  std::uint32_t max_count = 0;
  for (const auto c : class_counts) {
    if (c == 0)
      throw std::invalid_argument(
          "lace: every class needs at least one training example");
    max_count = std::max(max_count, c);
  }
  for (std::size_t c = 0; c < class_counts.size(); ++c) {
    if (class_counts[c] == max_count) continue;  // exact zero
    adj[c] = static_cast<T>(
        tau * std::log(static_cast<double>(class_counts[c]) /
                       static_cast<double>(max_count)));
  }
  return adj;
}

// adjusted_c = raw_c + adjustment_c (training-time only; evaluation scores
// raw logits).
template <typename T>
inline std::vector<T> lace_logits(std::span<const T> raw,
                                  std::span<const std::uint32_t> class_counts,
                                  double tau) {
  if (raw.size() != class_counts.size())
    throw std::invalid_argument("lace: logits/counts size mismatch");
  const auto adj = lace_adjustment<T>(class_counts, tau);
  std::vector<T> out(raw.begin(), raw.end());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] += adj[c];
  return out;
}

template <typename T>
struct LossGrad {
  T loss = T(0);
  std::vector<T> dlogits;
};

// Cross-entropy against the smoothed target: 1 - eps on the true class,
// eps / (C - 1) spread over the rest. Gradient is softmax(logits) - target.
template <typename T>
inline LossGrad<T> ce_label_smoothing(std::span<const T> logits,
                                      std::size_t label, double eps) {
  const std::size_t C = logits.size();
  if (C == 0) throw std::invalid_argument("loss over zero classes");
  if (label >= C) throw std::invalid_argument("label out of range");
  if (eps < 0.0 || eps >= 1.0)
    throw std::invalid_argument("label smoothing must satisfy 0 <= eps < 1");
  if (C == 1 && eps > 0.0)
    throw std::invalid_argument("label smoothing needs at least two classes");

  const std::vector<T> logp = nn::log_softmax<T>(logits);
  const T off = C > 1 ? static_cast<T>(eps / static_cast<double>(C - 1)) : T(0);
  const T on = static_cast<T>(1.0 - eps);

  LossGrad<T> out;
  out.dlogits.resize(C);
  T loss = T(0);
  for (std::size_t c = 0; c < C; ++c) {
    const T target = (c == label) ? on : off;
    loss -= target * logp[c];
    out.dlogits[c] = std::exp(logp[c]) - target;
  }
  out.loss = loss;
  return out;
}

}  // namespace racm
