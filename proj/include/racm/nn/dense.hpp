#pragma once
// Affine layer y = xW + b and its exact gradients. Thin wrappers over the
// kernels in mat.hpp; the fusion module calls the accumulating forms
// directly.

#include "racm/mat.hpp"

namespace racm::nn {

template <typename T>
inline Mat<T> dense_forward(const Mat<T>& W, std::span<const T> b,
                            const Mat<T>& x) {
  return affine_forward(W, b, x);
}

template <typename T>
struct DenseGrads {
  Mat<T> dW;
  std::vector<T> db;
  Mat<T> dx;
};

template <typename T>
inline DenseGrads<T> dense_backward(const Mat<T>& W, const Mat<T>& x,
                                    const Mat<T>& dy) {
  DenseGrads<T> g;
  g.dW = Mat<T>(W.rows, W.cols);
  g.db.assign(W.cols, T(0));
  g.dx = Mat<T>(x.rows, x.cols);
  affine_backward<T>(W, x, dy, g.dW, g.db.data(), g.dx);
  return g;
}

}  // namespace racm::nn
