// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Linear predictors on the four-variable SEM (data/sem_data.hpp):
//   yhat = a11 x1 + a21 x2,   chat = a12 x1 + a22 x2.
// Closed-form expected losses, Monte Carlo estimators and a gradient-descent
// minimizer of  E[(yhat-y)^2] + E[(chat-c)^2] + lambda * E[Lorth].

#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "oodkit/autodiff.hpp"
#include "oodkit/core/error.hpp"
#include "oodkit/data/sem_data.hpp"
#include "oodkit/decaug/orth.hpp"

namespace oodkit::sem {

inline constexpr double kSkipThreshold = 1e-12;

struct SemConfig {
  double sigma = 1.0;
  double a11 = 1.0;  // y from x1
  double a21 = 0.0;  // y from x2
  double a12 = 0.0;  // c from x1
  double a22 = 1.0;  // c from x2

  bool operator==(const SemConfig&) const = default;
};

inline void validate(const SemConfig& cfg) {
  if (!(cfg.sigma >= 0.0)) throw ConfigError("sigma", "must be >= 0");
  for (double a : {cfg.a11, cfg.a21, cfg.a12, cfg.a22})
    if (!std::isfinite(a)) throw ConfigError("alpha", "coefficients must be finite");
}

inline double expected_L2_closed(const SemConfig& cfg) {
  validate(cfg);
  const double s2 = cfg.sigma * cfg.sigma;
  const double u = cfg.a12 + cfg.a22 - 1.0, v = cfg.a22 - 1.0;
  return u * u * s2 + v * v * (s2 + 1.0) + s2;
}

/// Squared cosine between the two coefficient vectors; per-sample Lorth does
/// not depend on the sample, so this is also its expectation.
inline double expected_Lorth_closed(const SemConfig& cfg) {
  validate(cfg);
  const double ny = cfg.a11 * cfg.a11 + cfg.a21 * cfg.a21;
  const double nc = cfg.a12 * cfg.a12 + cfg.a22 * cfg.a22;
  if (ny == 0.0) throw ConfigError("alpha", "category predictor (a11, a21) is zero");
  if (nc == 0.0) throw ConfigError("alpha", "context predictor (a12, a22) is zero");
  const double dot = cfg.a11 * cfg.a12 + cfg.a21 * cfg.a22;
  return dot * dot / (ny * nc);
}

struct McEstimate {
  double Ly2 = 0.0;    // mean (yhat - y)^2
  double L2 = 0.0;     // mean (chat - c)^2
  double Lorth = 0.0;  // mean over non-skipped samples
  std::size_t n = 0;
  std::size_t used = 0;  // samples entering the Lorth mean
};

namespace detail {

// Per-sample squared cosine of the loss gradients w.r.t. (x1, x2):
// grad (yhat-y)^2 = 2 (yhat-y) (a11, a21), grad (chat-c)^2 = 2 (chat-c) (a12, a22).
inline double sample_orth(const SemConfig& cfg, double ry, double rc) {
  const double g1[2] = {2 * ry * cfg.a11, 2 * ry * cfg.a21};
  const double g2[2] = {2 * rc * cfg.a12, 2 * rc * cfg.a22};
  const double dot = g1[0] * g2[0] + g1[1] * g2[1];
  const double n1 = g1[0] * g1[0] + g1[1] * g1[1], n2 = g2[0] * g2[0] + g2[1] * g2[1];
  return dot * dot / (n1 * n2);
}

}  // namespace detail

/// Squared-error means only; defined for every configuration.
inline McEstimate mc_losses(const SemConfig& cfg, std::size_t n, std::uint64_t seed) {
  validate(cfg);
  if (n == 0) throw ConfigError("n", "must be >= 1");
  Rng rng(seed, "mc_estimate");
  McEstimate out;
  out.n = n;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = data::sem_draw(cfg.sigma, rng);
    const double ry = cfg.a11 * s.x1 + cfg.a21 * s.x2 - s.y;
    const double rc = cfg.a12 * s.x1 + cfg.a22 * s.x2 - s.c;
    out.Ly2 += ry * ry;
    out.L2 += rc * rc;
  }
  out.Ly2 /= static_cast<double>(n);
  out.L2 /= static_cast<double>(n);
  return out;
}

/// Monte Carlo estimates over n fresh SEM draws. Samples with
/// |(yhat-y)(chat-c)| < 1e-12 do not enter the Lorth mean.
inline McEstimate mc_estimate(const SemConfig& cfg, std::size_t n, std::uint64_t seed) {
  validate(cfg);
  if (n == 0) throw ConfigError("n", "must be >= 1");
  Rng rng(seed, "mc_estimate");
  McEstimate out;
  out.n = n;
  double orth = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = data::sem_draw(cfg.sigma, rng);
    const double ry = cfg.a11 * s.x1 + cfg.a21 * s.x2 - s.y;
    const double rc = cfg.a12 * s.x1 + cfg.a22 * s.x2 - s.c;
    out.Ly2 += ry * ry;
    out.L2 += rc * rc;
    if (std::abs(ry * rc) < kSkipThreshold) continue;
    orth += detail::sample_orth(cfg, ry, rc);
    ++out.used;
  }
  if (out.used == 0) throw Error("mc_estimate: every sample was skipped (zero residual product)");
  out.Ly2 /= static_cast<double>(n);
  out.L2 /= static_cast<double>(n);
  out.Lorth = orth / static_cast<double>(out.used);
  return out;
}

struct MinimizeOptions {
  // The spurious coefficient at the optimum shrinks like 1/lambda; plain
  // gradient descent on the orth term is stable while lr * lambda < 1.
  double lambda_orth = 200.0;
  std::size_t steps = 5000;
  double lr = 0.001;
  std::size_t batch = 1024;
  // When false the Lorth gradient updates only (a11, a21); the context
  // predictor is fit by its own squared error alone.
  bool orth_into_context = false;
  std::size_t record_every = 50;
};

struct TrajectoryRow {
  std::size_t step = 0;
  SemConfig cfg;
  double Ly2 = 0.0, L2 = 0.0, Lorth = 0.0;
};

struct MinimizeResult {
  SemConfig final;
  std::vector<TrajectoryRow> trajectory;
};

/// Minibatch gradient descent on the reparameterized Monte Carlo objective.
/// Per-sample Lorth is built from input gradients taken with create_graph, so
/// its parameter gradient comes from double backprop.
inline MinimizeResult minimize_joint(const SemConfig& init, const MinimizeOptions& opt, std::uint64_t seed) {
  validate(init);
  if (!(opt.lambda_orth >= 0.0)) throw ConfigError("lambda_orth", "must be >= 0");
  if (opt.batch == 0) throw ConfigError("batch", "must be >= 1");
  Rng rng(seed, "minimize_joint");
  // Columns: category predictor, context predictor.
  Array coef(Shape{2, 2}, std::vector<double>{init.a11, init.a12, init.a21, init.a22});
  const double sigma = init.sigma;
  MinimizeResult res;

  auto to_cfg = [&](const Array& a) { return SemConfig{sigma, a[0], a[2], a[1], a[3]}; };
  for (std::size_t step = 0; step <= opt.steps; ++step) {
    Array x(Shape{opt.batch, 2}), t(Shape{opt.batch, 2});
    for (std::size_t i = 0; i < opt.batch; ++i) {
      const auto s = data::sem_draw(sigma, rng);
      x[2 * i] = s.x1, x[2 * i + 1] = s.x2, t[2 * i] = s.y, t[2 * i + 1] = s.c;
    }
    Array g;
    try {
      Tape tape;
      const Tensor a = tape.leaf(coef);
      const Tensor xs = tape.leaf(x);
      const Tensor target(t);
      const Tensor r = sub(matmul(xs, a), target);
      const Tensor ry = slice(r, 1, 0, 1), rc = slice(r, 1, 1, 1);
      const Tensor ly = mean(square(ry)), lc = mean(square(rc));

      // Lorth: the context column is detached unless orth_into_context.
      const Tensor a_orth =
          opt.orth_into_context ? a : concat({slice(a, 1, 0, 1), detach(slice(a, 1, 1, 1))}, 1);
      const Tensor ro = sub(matmul(xs, a_orth), target);
      const Tensor g1 = grad(sum(square(slice(ro, 1, 0, 1))), {xs}, true)[0];
      const Tensor g2 = grad(sum(square(slice(ro, 1, 1, 1))), {xs}, true)[0];
      std::vector<char> keep(opt.batch);
      for (std::size_t i = 0; i < opt.batch; ++i) keep[i] = std::abs(ry[i] * rc[i]) >= kSkipThreshold;
      const Tensor lo = decaug::orth_loss(g1, g2, keep);

      if (opt.record_every && (step % opt.record_every == 0 || step == opt.steps))
        res.trajectory.push_back({step, to_cfg(coef), ly.item(), lc.item(), lo.item()});
      if (step == opt.steps) break;

      const Tensor total = add(add(ly, lc), scale(lo, opt.lambda_orth));
      g = grad(total, {a})[0].value();
    } catch (const NonFiniteError& e) {
      throw DivergenceError("minimize_joint", std::string(e.what()) + " at step " + std::to_string(step));
    }
    for (std::size_t k = 0; k < 4; ++k) coef[k] -= opt.lr * g[k];
    if (!coef.all_finite()) throw DivergenceError("minimize_joint", "coefficients became non-finite at step " +
                                                                        std::to_string(step));
  }
  res.final = to_cfg(coef);
  return res;
}

}  // namespace oodkit::sem
