// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "prefix_forest/errors.h"

namespace prefix_forest::refmodel {

// Dense row-major matrix. Rows are tokens wherever a matrix holds activations.
template <class T>
struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<T> data;

  Matrix() = default;
  Matrix(size_t r, size_t c, T fill = T(0)) : rows(r), cols(c), data(r * c, fill) {}

  T& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  const T& operator()(size_t r, size_t c) const { return data[r * cols + c]; }
  T* row(size_t r) { return data.data() + r * cols; }
  const T* row(size_t r) const { return data.data() + r * cols; }
  size_t size() const { return data.size(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeMismatch(what);
}

// a (n x k) * b (k x m). Each output row depends only on the matching row of a.
template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  Matrix<T> out(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    T* o = out.row(i);
    const T* ai = a.row(i);
    for (size_t k = 0; k < a.cols; ++k) {
      const T aik = ai[k];
      const T* bk = b.row(k);
      for (size_t j = 0; j < b.cols; ++j) o[j] += aik * bk[j];
    }
  }
  return out;
}

// a (n x k) * b^T where b is (m x k).
template <class T>
Matrix<T> matmul_nt(const Matrix<T>& a, const Matrix<T>& b) {
  require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
  Matrix<T> out(a.rows, b.rows);
  for (size_t i = 0; i < a.rows; ++i) {
    const T* ai = a.row(i);
    for (size_t j = 0; j < b.rows; ++j) {
      const T* bj = b.row(j);
      T s = 0;
      for (size_t k = 0; k < a.cols; ++k) s += ai[k] * bj[k];
      out(i, j) = s;
    }
  }
  return out;
}

// out += a^T * b, with a (n x k), b (n x m), out (k x m). This is the
// weight-gradient product X^T dY.
template <class T>
void matmul_tn_acc(const Matrix<T>& a, const Matrix<T>& b, Matrix<T>& out) {
  require(a.rows == b.rows && out.rows == a.cols && out.cols == b.cols, "matmul_tn_acc: shape mismatch");
  for (size_t n = 0; n < a.rows; ++n) {
    const T* an = a.row(n);
    const T* bn = b.row(n);
    for (size_t k = 0; k < a.cols; ++k) {
      const T ank = an[k];
      T* ok = out.row(k);
      for (size_t j = 0; j < b.cols; ++j) ok[j] += ank * bn[j];
    }
  }
}

template <class T>
void add_in_place(Matrix<T>& dst, const Matrix<T>& src) {
  require(dst.same_shape(src), "add: shape mismatch");
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

}  // namespace prefix_forest::refmodel
