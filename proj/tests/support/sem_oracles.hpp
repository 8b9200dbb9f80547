// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reference computations for the SEM tests, written independently of the
// library code they check.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

namespace oodkit::testing {

// yhat - y = (a11 + a21 - 1) N1 + (a21 - 1) N2 + a21 N3 with Var N1 = Var N2 = s^2, Var N3 = 1.
inline double expected_Ly_closed(double sigma, double a11, double a21) {
  const double s2 = sigma * sigma;
  const double u = a11 + a21 - 1.0, v = a21 - 1.0;
  return u * u * s2 + v * v * s2 + a21 * a21;
}

// chat - c = (a12 + a22 - 1) N1 + (a22 - 1) (N2 + N3) - N4.
inline double expected_Lc_reference(double sigma, double a12, double a22) {
  const double s2 = sigma * sigma;
  const double u = a12 + a22 - 1.0, v = a22 - 1.0;
  return u * u * s2 + v * v * s2 + v * v + s2;
}

inline double cos2_reference(double a11, double a21, double a12, double a22) {
  const double d = a11 * a12 + a21 * a22;
  return d * d / ((a11 * a11 + a21 * a21) * (a12 * a12 + a22 * a22));
}

// Least-squares coefficient of y on x2 (with x1 in the regression).
inline double ols_a21(double sigma) { return sigma * sigma / (sigma * sigma + 1.0); }

inline constexpr int kGridHalf = 40;  // [-2, 2] at step 0.05
inline double grid_value(int k) { return 0.05 * k; }

struct GridMin2 {
  double first = 0, second = 0, value = std::numeric_limits<double>::infinity();
};

// argmin over the grid of f(first, second); ties keep the first visited point.
template <class F>
GridMin2 grid_argmin(F f) {
  GridMin2 best;
  for (int i = -kGridHalf; i <= kGridHalf; ++i)
    for (int j = -kGridHalf; j <= kGridHalf; ++j) {
      const double v = f(grid_value(i), grid_value(j));
      if (v < best.value) best = {grid_value(i), grid_value(j), v};
    }
  return best;
}

// Grid points (a11, a21, a12, a22) where E[L2] and E[Lorth] are both minimal
// (E[L2] = sigma^2 at its minimum, cos^2 = 0 at the minimum of E[Lorth]).
inline std::vector<std::array<double, 4>> both_minimal_grid_points(double sigma) {
  std::vector<std::array<double, 4>> out;
  for (int i = -kGridHalf; i <= kGridHalf; ++i)
    for (int j = -kGridHalf; j <= kGridHalf; ++j) {
      const double a12 = grid_value(i), a22 = grid_value(j);
      if (std::abs(expected_Lc_reference(sigma, a12, a22) - sigma * sigma) > 1e-12) continue;
      for (int k = -kGridHalf; k <= kGridHalf; ++k)
        for (int l = -kGridHalf; l <= kGridHalf; ++l) {
          const double a11 = grid_value(k), a21 = grid_value(l);
          if (a11 == 0.0 && a21 == 0.0) continue;
          if (cos2_reference(a11, a21, a12, a22) < 1e-12) out.push_back({a11, a21, a12, a22});
        }
    }
  return out;
}

// Chebyshev distance from (a11, a21, a12, a22) to the nearest point of a set.
inline double distance_to_set(const std::array<double, 4>& a, const std::vector<std::array<double, 4>>& set) {
  double nearest = std::numeric_limits<double>::infinity();
  for (const auto& p : set) {
    double d = 0;
    for (int k = 0; k < 4; ++k) d = std::max(d, std::abs(a[k] - p[k]));
    nearest = std::min(nearest, d);
  }
  return nearest;
}

}  // namespace oodkit::testing
