#pragma once
// Numerically stable softmax and log-softmax with analytic backward.

#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "racm/mat.hpp"

namespace racm::nn {

// Max-subtracted softmax; output is positive and sums to 1.
template <typename T>
inline std::vector<T> softmax(std::span<const T> scores) {
  if (scores.empty()) throw std::invalid_argument("softmax of empty vector");
  if (!racm::all_finite(scores.data(), scores.size()))
    throw std::invalid_argument("softmax: non-finite score");
  T m = scores[0];
  for (const T s : scores) m = std::max(m, s);
  std::vector<T> out(scores.size());
  T sum = T(0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp(scores[i] - m);
    sum += out[i];
  }
  const T inv = T(1) / sum;
  for (auto& v : out) v *= inv;
  return out;
}

// ds_i = a_i * (dy_i - sum_j a_j dy_j)
template <typename T>
inline std::vector<T> softmax_backward(std::span<const T> a,
                                       std::span<const T> dy) {
  if (a.size() != dy.size())
    throw std::invalid_argument("softmax_backward: size mismatch");
  T inner = T(0);
  for (std::size_t i = 0; i < a.size(); ++i) inner += a[i] * dy[i];
  std::vector<T> ds(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) ds[i] = a[i] * (dy[i] - inner);
  return ds;
}

// log softmax(s)_i = s_i - max - log sum exp(s - max)
template <typename T>
inline std::vector<T> log_softmax(std::span<const T> scores) {
  if (scores.empty())
    throw std::invalid_argument("log_softmax of empty vector");
  T m = scores[0];
  for (const T s : scores) m = std::max(m, s);
  T sum = T(0);
  for (const T s : scores) sum += std::exp(s - m);
  const T lse = m + std::log(sum);
  std::vector<T> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] - lse;
  return out;
}

}  // namespace racm::nn
