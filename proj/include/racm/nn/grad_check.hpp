#pragma once
// Central finite-difference verification of analytic gradients. The loss
// callable must be a deterministic function of the param values; this is
// enforced by evaluating it twice up front.

#include <functional>
#include <string>
#include <vector>

#include "racm/nn/param.hpp"
#include "racm/rng.hpp"

namespace racm::nn {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_coord = 0;
  std::size_t coords_checked = 0;
};

struct GradCheckOptions {
  double fd_step = 1e-5;
  // Coordinates where analytic and finite-difference values differ by less
  // than this count as exact. Structurally gradient-free parameters (a key
  // projection bias shifts every attention score equally and softmax
  // ignores the shift) have a true gradient of zero while central
  // differences return pure roundoff noise; without an absolute backstop
  // the relative error on such coordinates reads as 1.
  double abs_tol = 1e-8;
  // Above this many coordinates, check a seeded random subsample instead of
  // every coordinate.
  std::size_t max_coords = 50000;
  std::uint64_t subsample_seed = 17;
};

// loss_fn: (const ParamSet<double>&) -> double. Analytic gradients must
// already be stored in params[...].grad for the current values.
template <typename LossFn>
inline GradCheckReport grad_check(ParamSet<double>& params, LossFn&& loss_fn,
                                  const GradCheckOptions& opts = {}) {
  const double l0 = loss_fn(params);
  const double l1 = loss_fn(params);
  if (l0 != l1)
    throw std::invalid_argument(
        "grad_check: loss function is not deterministic");

  // Collect (param, coord) pairs to probe.
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  const std::size_t total = params.total_coords();
  if (total <= opts.max_coords) {
    for (std::size_t p = 0; p < params.size(); ++p)
      for (std::size_t e = 0; e < params[p].size(); ++e)
        coords.emplace_back(p, e);
  } else {
    Rng rng(opts.subsample_seed);
    coords.reserve(opts.max_coords);
    for (std::size_t n = 0; n < opts.max_coords; ++n) {
      std::size_t flat = static_cast<std::size_t>(rng.next_below(total));
      std::size_t p = 0;
      while (flat >= params[p].size()) {
        flat -= params[p].size();
        ++p;
      }
      coords.emplace_back(p, flat);
    }
  }

  GradCheckReport report;
  report.coords_checked = coords.size();
  for (const auto& [p, e] : coords) {
    const double old = params[p].value[e];
    params[p].value[e] = old + opts.fd_step;
    const double lp = loss_fn(params);
    params[p].value[e] = old - opts.fd_step;
    const double lm = loss_fn(params);
    params[p].value[e] = old;
    const double fd = (lp - lm) / (2.0 * opts.fd_step);
    const double an = params[p].grad[e];
    if (std::abs(an - fd) <= opts.abs_tol) continue;
    const double rel =
        std::abs(an - fd) / std::max(1e-12, std::abs(an) + std::abs(fd));
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = params[p].name;
      report.worst_coord = e;
    }
  }
  return report;
}

}  // namespace racm::nn
