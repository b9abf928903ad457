// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0

#include "prefix_forest/refmodel/attention.h"

#include "prefix_forest/refmodel/scalar.h"

namespace prefix_forest::refmodel {

namespace {

template <class T>
void check_qkv(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v, const DenseMask& mask) {
  require(q.same_shape(k) && q.rows == v.rows, "attention: q, k, v shapes differ");
  require(mask.n == q.rows, "attention: mask size differs from token count");
}

template <class T>
Matrix<T> rotate(const Matrix<T>& x, std::span<const Tokens> positions, double base, T sign) {
  require(positions.size() == x.rows, "rope: position id count differs from token count");
  require(x.cols % 2 == 0, "rope: head dimension must be even");
  Matrix<T> out(x.rows, x.cols);
  const size_t half = x.cols / 2;
  for (size_t i = 0; i < half; ++i) {
    const T inv_freq = scalar::pow(static_cast<T>(base), -static_cast<T>(2 * i) / static_cast<T>(x.cols));
    for (size_t r = 0; r < x.rows; ++r) {
      const T angle = static_cast<T>(positions[r]) * inv_freq;
      const T c = scalar::cos(angle);
      const T s = sign * scalar::sin(angle);
      const T x0 = x(r, 2 * i);
      const T x1 = x(r, 2 * i + 1);
      out(r, 2 * i) = x0 * c - x1 * s;
      out(r, 2 * i + 1) = x0 * s + x1 * c;
    }
  }
  return out;
}

}  // namespace

template <class T>
AttentionResult<T> attention_forward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                     const DenseMask& mask) {
  check_qkv(q, k, v, mask);
  const size_t n = q.rows;
  const T scale = T(1) / scalar::sqrt(static_cast<T>(q.cols));
  AttentionResult<T> r{Matrix<T>(n, v.cols), Matrix<T>(n, n)};
  std::vector<T> scores(n);
  for (size_t i = 0; i < n; ++i) {
    require(mask(i, i), "attention: mask must allow the diagonal");
    T max_score = -INFINITY;
    for (size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      T s = 0;
      for (size_t c = 0; c < q.cols; ++c) s += q(i, c) * k(j, c);
      scores[j] = s * scale;
      if (scores[j] > max_score) max_score = scores[j];
    }
    T denom = 0;
    for (size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      scores[j] = scalar::exp(scores[j] - max_score);
      denom += scores[j];
    }
    T* o = r.out.row(i);
    for (size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      const T p = scores[j] / denom;
      r.probs(i, j) = p;
      const T* vj = v.row(j);
      for (size_t c = 0; c < v.cols; ++c) o[c] += p * vj[c];
    }
  }
  return r;
}

template <class T>
AttentionGrads<T> attention_backward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                     const Matrix<T>& probs, const Matrix<T>& d_out, const DenseMask& mask) {
  check_qkv(q, k, v, mask);
  const size_t n = q.rows;
  require(probs.rows == n && probs.cols == n, "attention_backward: probs shape");
  require(d_out.rows == n && d_out.cols == v.cols, "attention_backward: d_out shape");
  const T scale = T(1) / scalar::sqrt(static_cast<T>(q.cols));
  AttentionGrads<T> g{Matrix<T>(n, q.cols), Matrix<T>(n, k.cols), Matrix<T>(n, v.cols)};
  std::vector<T> dp(n);
  for (size_t i = 0; i < n; ++i) {
    const T* doi = d_out.row(i);
    // dV = P^T dO; dP = dO V^T.
    T row_dot = 0;
    for (size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      const T p = probs(i, j);
      T* dvj = g.dv.row(j);
      const T* vj = v.row(j);
      T s = 0;
      for (size_t c = 0; c < v.cols; ++c) {
        dvj[c] += p * doi[c];
        s += doi[c] * vj[c];
      }
      dp[j] = s;
      row_dot += p * s;
    }
    // dS = P * (dP - rowsum(P * dP)); dQ = dS K / sqrt(d); dK = dS^T Q / sqrt(d).
    for (size_t j = 0; j < n; ++j) {
      if (!mask(i, j)) continue;
      const T ds = probs(i, j) * (dp[j] - row_dot) * scale;
      for (size_t c = 0; c < q.cols; ++c) {
        g.dq(i, c) += ds * k(j, c);
        g.dk(j, c) += ds * q(i, c);
      }
    }
  }
  return g;
}

template <class T>
Matrix<T> rope_apply(const Matrix<T>& x, std::span<const Tokens> positions, double base) {
  return rotate(x, positions, base, T(1));
}

template <class T>
Matrix<T> rope_backward(const Matrix<T>& dy, std::span<const Tokens> positions, double base) {
  return rotate(dy, positions, base, T(-1));
}

#define PREFIX_FOREST_INSTANTIATE(T)                                                                      \
  template AttentionResult<T> attention_forward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,     \
                                                const DenseMask&);                                        \
  template AttentionGrads<T> attention_backward(const Matrix<T>&, const Matrix<T>&, const Matrix<T>&,     \
                                                const Matrix<T>&, const Matrix<T>&, const DenseMask&);    \
  template Matrix<T> rope_apply(const Matrix<T>&, std::span<const Tokens>, double);                       \
  template Matrix<T> rope_backward(const Matrix<T>&, std::span<const Tokens>, double);

PREFIX_FOREST_INSTANTIATE(float)
PREFIX_FOREST_INSTANTIATE(double)
PREFIX_FOREST_INSTANTIATE(long double)
PREFIX_FOREST_INSTANTIATE(Quad)

#undef PREFIX_FOREST_INSTANTIATE

}  // namespace prefix_forest::refmodel
