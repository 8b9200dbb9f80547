// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "oodkit/autodiff/grad.hpp"
#include "oodkit/core/rng.hpp"

namespace oodkit {

struct GradCheckOptions {
  double step = 1e-5;
  // Coordinates probed per input; 0 probes every coordinate.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

/// Compares reverse-mode gradients of a scalar function against central
/// differences and returns the worst relative error. The error of coordinate i
/// is |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * scale) where scale is the largest
/// gradient magnitude seen, so coordinates that are tiny compared to the rest
/// of the gradient are judged on an absolute footing.
inline double finite_diff_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                                const std::vector<Array>& xs, const GradCheckOptions& opt = {}) {
  Tape tape;
  std::vector<Tensor> leaves;
  for (const auto& x : xs) leaves.push_back(tape.leaf(x));
  const auto analytic = grad(f(leaves), leaves);

  auto eval = [&](const std::vector<Array>& pts) {
    std::vector<Tensor> consts;
    for (const auto& p : pts) consts.push_back(Tensor(p));
    return f(consts).item();
  };

  Rng rng(opt.seed, "finite_diff_check");
  std::vector<double> a_vals, n_vals;
  std::vector<Array> pts = xs;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    std::vector<std::size_t> coords(xs[t].numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (opt.max_coords && coords.size() > opt.max_coords) {
      rng.shuffle(coords.begin(), coords.end());
      coords.resize(opt.max_coords);
    }
    for (auto i : coords) {
      const double x0 = xs[t][i];
      pts[t][i] = x0 + opt.step;
      const double fp = eval(pts);
      pts[t][i] = x0 - opt.step;
      const double fm = eval(pts);
      pts[t][i] = x0;
      n_vals.push_back((fp - fm) / (2.0 * opt.step));
      a_vals.push_back(analytic[t].value()[i]);
    }
  }
  double scale = 0.0;
  for (std::size_t i = 0; i < a_vals.size(); ++i) scale = std::max({scale, std::abs(a_vals[i]), std::abs(n_vals[i])});
  double worst = 0.0;
  for (std::size_t i = 0; i < a_vals.size(); ++i) {
    const double denom = std::max({std::abs(a_vals[i]), std::abs(n_vals[i]), 1e-3 * scale, 1e-300});
    worst = std::max(worst, std::abs(a_vals[i] - n_vals[i]) / denom);
  }
  return worst;
}

inline double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Array& x, double h = 1e-5) {
  GradCheckOptions opt;
  opt.step = h;
  return finite_diff_check([&](const std::vector<Tensor>& v) { return f(v[0]); }, std::vector<Array>{x}, opt);
}

}  // namespace oodkit
