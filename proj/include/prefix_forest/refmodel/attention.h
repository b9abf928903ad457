// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Single-head masked attention and rotary embeddings, forward and backward.

#pragma once

#include <span>

#include "prefix_forest/batch_emitter.h"
#include "prefix_forest/refmodel/matrix.h"

namespace prefix_forest::refmodel {

template <class T>
struct AttentionResult {
  Matrix<T> out;    // P V
  Matrix<T> probs;  // row softmax of Q K^T / sqrt(d); masked entries exactly 0
};

template <class T>
struct AttentionGrads {
  Matrix<T> dq;
  Matrix<T> dk;
  Matrix<T> dv;
};

// q, k, v are (tokens x head_dim); mask is (tokens x tokens) and must allow
// every diagonal entry.
template <class T>
AttentionResult<T> attention_forward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                     const DenseMask& mask);

template <class T>
AttentionGrads<T> attention_backward(const Matrix<T>& q, const Matrix<T>& k, const Matrix<T>& v,
                                     const Matrix<T>& probs, const Matrix<T>& d_out, const DenseMask& mask);

// Rotates column pairs (2i, 2i+1) of each row by position * base^(-2i/d).
template <class T>
Matrix<T> rope_apply(const Matrix<T>& x, std::span<const Tokens> positions, double base);

// Adjoint of rope_apply: rotation by the negative angle.
template <class T>
Matrix<T> rope_backward(const Matrix<T>& dy, std::span<const Tokens> positions, double base);

}  // namespace prefix_forest::refmodel
