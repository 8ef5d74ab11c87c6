#pragma once
// Small dense row-major matrix container, non-owning views, and the handful
// of kernels the library needs. Loops are written so the innermost index
// runs over contiguous output columns (vectorizable without reassociating
// reductions), and every reduction accumulates in a fixed ascending order;
// results are therefore bit-reproducible run to run.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace racm {

template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, T(0)) {}

  T* row(std::size_t i) { return data.data() + i * cols; }
  const T* row(std::size_t i) const { return data.data() + i * cols; }

  std::span<T> row_span(std::size_t i) { return {row(i), cols}; }
  std::span<const T> row_span(std::size_t i) const { return {row(i), cols}; }

  T& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Mat& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

// Non-owning views; rows()/row(i) match Mat so kernels template over both.
template <typename T>
struct MatRef {
  T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  MatRef() = default;
  MatRef(T* d, std::size_t r, std::size_t c) : data(d), rows(r), cols(c) {}
  MatRef(Mat<T>& m) : data(m.data.data()), rows(m.rows), cols(m.cols) {}

  T* row(std::size_t i) const { return data + i * cols; }
  T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

template <typename T>
struct CMatRef {
  const T* data = nullptr;
  std::size_t rows = 0;
  std::size_t cols = 0;

  CMatRef() = default;
  CMatRef(const T* d, std::size_t r, std::size_t c)
      : data(d), rows(r), cols(c) {}
  CMatRef(const Mat<T>& m) : data(m.data.data()), rows(m.rows), cols(m.cols) {}
  CMatRef(const MatRef<T>& m) : data(m.data), rows(m.rows), cols(m.cols) {}

  const T* row(std::size_t i) const { return data + i * cols; }
  const T& at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
};

// Canonical dot product: single accumulator, ascending index. Every scoring
// path in the library funnels through this so exact and IVF searches agree
// bit-for-bit.
template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
inline T dot(std::span<const T> a, std::span<const T> b) {
  return dot(a.data(), b.data(), a.size());
}

template <typename T>
inline double norm2(const T* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += static_cast<double>(a[i]) * static_cast<double>(a[i]);
  return std::sqrt(acc);
}

template <typename T>
inline double norm2(std::span<const T> a) {
  return norm2(a.data(), a.size());
}

template <typename T>
inline bool all_finite(const T* a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(static_cast<double>(a[i]))) return false;
  return true;
}

// out = v / ||v||. Throws on zero (or denormal-tiny) norm.
template <typename T>
inline void normalize_into(const T* v, std::size_t n, T* out) {
  const double nrm = norm2(v, n);
  if (!(nrm > 1e-30))
    throw std::invalid_argument("cannot normalize a zero-norm vector");
  const double inv = 1.0 / nrm;
  for (std::size_t i = 0; i < n; ++i)
    out[i] = static_cast<T>(static_cast<double>(v[i]) * inv);
}

template <typename T>
inline std::vector<T> normalized(std::span<const T> v) {
  std::vector<T> out(v.size());
  normalize_into(v.data(), v.size(), out.data());
  return out;
}

// y(batch x n) = x(batch x m) * W(m x n) + b(n). y is overwritten.
template <typename T>
inline void affine_forward(CMatRef<T> W, const T* b, CMatRef<T> x,
                           MatRef<T> y) {
  const std::size_t batch = x.rows, m = x.cols, n = W.cols;
  if (W.rows != m || y.rows != batch || y.cols != n)
    throw std::invalid_argument("affine_forward: shape mismatch");
  for (std::size_t i = 0; i < batch; ++i) {
    T* yi = y.row(i);
    for (std::size_t j = 0; j < n; ++j) yi[j] = b[j];
    const T* xi = x.row(i);
    for (std::size_t t = 0; t < m; ++t) {
      const T xv = xi[t];
      const T* wt = W.row(t);
      for (std::size_t j = 0; j < n; ++j) yi[j] += xv * wt[j];
    }
  }
}

template <typename T>
inline Mat<T> affine_forward(const Mat<T>& W, std::span<const T> b,
                             const Mat<T>& x) {
  if (b.size() != W.cols)
    throw std::invalid_argument("affine_forward: bias length mismatch");
  Mat<T> y(x.rows, W.cols);
  affine_forward<T>(W, b.data(), x, y);
  return y;
}

// Gradients of affine_forward. dW (m x n) and db (n) are accumulated into;
// dx (batch x m) is overwritten when its data pointer is non-null.
template <typename T>
inline void affine_backward(CMatRef<T> W, CMatRef<T> x, CMatRef<T> dy,
                            MatRef<T> dW, T* db, MatRef<T> dx) {
  const std::size_t batch = x.rows, m = x.cols, n = W.cols;
  if (dy.rows != batch || dy.cols != n || dW.rows != m || dW.cols != n)
    throw std::invalid_argument("affine_backward: shape mismatch");
  for (std::size_t t = 0; t < m; ++t) {
    T* dwt = dW.row(t);
    for (std::size_t i = 0; i < batch; ++i) {
      const T xv = x.at(i, t);
      const T* dyi = dy.row(i);
      for (std::size_t j = 0; j < n; ++j) dwt[j] += xv * dyi[j];
    }
  }
  for (std::size_t i = 0; i < batch; ++i) {
    const T* dyi = dy.row(i);
    for (std::size_t j = 0; j < n; ++j) db[j] += dyi[j];
  }
  if (dx.data != nullptr) {
    if (dx.rows != batch || dx.cols != m)
      throw std::invalid_argument("affine_backward: dx shape mismatch");
    for (std::size_t i = 0; i < batch; ++i) {
      const T* dyi = dy.row(i);
      T* dxi = dx.row(i);
      for (std::size_t t = 0; t < m; ++t) dxi[t] = dot(dyi, W.row(t), n);
    }
  }
}

}  // namespace racm
