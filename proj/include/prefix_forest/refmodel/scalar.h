// Copyright (c) 2026, The prefix_forest Authors
// SPDX-License-Identifier: Apache-2.0
//
// Elementary functions for every scalar type the model is instantiated with,
// including binary128 (used only by the finite-difference oracle).

#pragma once

#include <cmath>

#include <quadmath.h>

namespace prefix_forest::refmodel {

using Quad = __float128;

namespace scalar {

inline float exp(float x) { return std::exp(x); }
inline double exp(double x) { return std::exp(x); }
inline long double exp(long double x) { return std::exp(x); }
inline Quad exp(Quad x) { return expq(x); }

inline float log(float x) { return std::log(x); }
inline double log(double x) { return std::log(x); }
inline long double log(long double x) { return std::log(x); }
inline Quad log(Quad x) { return logq(x); }

inline float sqrt(float x) { return std::sqrt(x); }
inline double sqrt(double x) { return std::sqrt(x); }
inline long double sqrt(long double x) { return std::sqrt(x); }
inline Quad sqrt(Quad x) { return sqrtq(x); }

inline float pow(float x, float y) { return std::pow(x, y); }
inline double pow(double x, double y) { return std::pow(x, y); }
inline long double pow(long double x, long double y) { return std::pow(x, y); }
inline Quad pow(Quad x, Quad y) { return powq(x, y); }

inline float cos(float x) { return std::cos(x); }
inline double cos(double x) { return std::cos(x); }
inline long double cos(long double x) { return std::cos(x); }
inline Quad cos(Quad x) { return cosq(x); }

inline float sin(float x) { return std::sin(x); }
inline double sin(double x) { return std::sin(x); }
inline long double sin(long double x) { return std::sin(x); }
inline Quad sin(Quad x) { return sinq(x); }

inline float abs(float x) { return std::abs(x); }
inline double abs(double x) { return std::abs(x); }
inline long double abs(long double x) { return std::abs(x); }
inline Quad abs(Quad x) { return fabsq(x); }

}  // namespace scalar
}  // namespace prefix_forest::refmodel
