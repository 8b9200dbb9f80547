// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "oodkit/sem/semverify.hpp"
#include "support/sem_oracles.hpp"

namespace oodkit::sem {
namespace {

using testing::cos2_reference;
using testing::expected_Lc_reference;
using testing::expected_Ly_closed;

SemConfig random_cfg(Rng& rng, double sigma) {
  return {sigma, rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
}

TEST(ClosedForm, L2Examples) {
  for (double s : {0.0, 0.5, 1.0, 3.0}) EXPECT_DOUBLE_EQ(expected_L2_closed({s, 0.3, 0.7, 0.0, 1.0}), s * s);
  EXPECT_DOUBLE_EQ(expected_L2_closed({0.0, 1.0, 0.0, 0.0, 0.0}), 1.0);
  EXPECT_DOUBLE_EQ(expected_L2_closed({1.0, 1.0, 0.0, 1.0, 0.0}), 3.0);
  const auto mc = mc_estimate({1.0, 1.0, 0.0, 1.0, 0.0}, 1000000, 0);
  EXPECT_NEAR(mc.L2, 3.0, 0.03);
}

TEST(ClosedForm, L2AgreesWithNoiseDecomposition) {
  Rng rng(1, "l2");
  for (int i = 0; i < 200; ++i) {
    const auto cfg = random_cfg(rng, rng.uniform(0, 2));
    EXPECT_NEAR(expected_L2_closed(cfg), expected_Lc_reference(cfg.sigma, cfg.a12, cfg.a22), 1e-12);
  }
}

TEST(ClosedForm, LorthExamples) {
  EXPECT_DOUBLE_EQ(expected_Lorth_closed({1.0, 1.0, 0.0, 0.0, 1.0}), 0.0);
  EXPECT_DOUBLE_EQ(expected_Lorth_closed({1.0, 1.0, 1.0, 0.0, 1.0}), 0.5);
  EXPECT_NEAR(mc_estimate({1.0, 1.0, 1.0, 0.0, 1.0}, 10000, 3).Lorth, 0.5, 1e-12);
  EXPECT_DOUBLE_EQ(expected_Lorth_closed({1.0, 0.4, 0.0, 0.0, 1.0}), 0.0);
  // Reduced form on the L2-optimal context predictor.
  EXPECT_DOUBLE_EQ(expected_Lorth_closed({1.0, 0.6, 0.8, 0.0, 1.0}), 0.64 / (0.36 + 0.64));
  EXPECT_THROW(expected_Lorth_closed({1.0, 0.0, 0.0, 0.0, 1.0}), ConfigError);
  EXPECT_THROW(expected_Lorth_closed({1.0, 1.0, 0.0, 0.0, 0.0}), ConfigError);
  EXPECT_THROW(expected_L2_closed({-1.0, 1.0, 0.0, 0.0, 1.0}), ConfigError);
}

TEST(ClosedForm, LorthBoundedAndScaleInvariant) {
  Rng rng(2, "lorth");
  for (int i = 0; i < 500; ++i) {
    const auto cfg = random_cfg(rng, 1.0);
    const double v = expected_Lorth_closed(cfg);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0 + 1e-15);
    EXPECT_NEAR(v, cos2_reference(cfg.a11, cfg.a21, cfg.a12, cfg.a22), 1e-14);
    const double s = rng.uniform(0.1, 10), t = rng.uniform(0.1, 10);
    EXPECT_NEAR(expected_Lorth_closed({1.0, s * cfg.a11, s * cfg.a21, t * cfg.a12, t * cfg.a22}), v, 1e-12);
  }
}

TEST(ClosedForm, L2LowerBoundAttainedOnlyAtTheCausalPredictor) {
  for (double sigma : {0.25, 1.0, 2.0}) {
    const auto best = testing::grid_argmin([&](double a12, double a22) {
      return expected_L2_closed({sigma, 1.0, 0.0, a12, a22});
    });
    EXPECT_NEAR(best.value, sigma * sigma, 1e-12);
    EXPECT_NEAR(best.first, 0.0, 1e-12);
    EXPECT_NEAR(best.second, 1.0, 1e-12);
    for (int i = -testing::kGridHalf; i <= testing::kGridHalf; ++i) {
      for (int j = -testing::kGridHalf; j <= testing::kGridHalf; ++j) {
        const double a12 = testing::grid_value(i), a22 = testing::grid_value(j);
        const double v = expected_L2_closed({sigma, 1.0, 0.0, a12, a22});
        if (i == 0 && j == 20) continue;
        EXPECT_GT(v, sigma * sigma + 1e-6) << a12 << "," << a22;
      }
    }
  }
}

TEST(ClosedForm, ZeroNoiseLeavesTheX1CoefficientFree) {
  // With sigma = 0 the a12 term has zero weight: every (a12, 1) attains the bound.
  for (int i = -testing::kGridHalf; i <= testing::kGridHalf; ++i) {
    EXPECT_EQ(expected_L2_closed({0.0, 1.0, 0.0, testing::grid_value(i), 1.0}), 0.0);
    EXPECT_GT(expected_L2_closed({0.0, 1.0, 0.0, testing::grid_value(i), 1.05}), 0.0);
  }
}

TEST(MonteCarlo, MatchesClosedFormsAtOneMillion) {
  Rng rng(4, "mc");
  for (double sigma : {0.5, 2.0}) {
    const auto cfg = random_cfg(rng, sigma);
    const auto mc = mc_estimate(cfg, 1000000, 7);
    EXPECT_NEAR(mc.L2, expected_L2_closed(cfg), 0.01 * expected_L2_closed(cfg));
    EXPECT_NEAR(mc.Lorth, expected_Lorth_closed(cfg), 0.01 * expected_Lorth_closed(cfg) + 1e-15);
    EXPECT_NEAR(mc.Ly2, expected_Ly_closed(sigma, cfg.a11, cfg.a21), 0.01 * expected_Ly_closed(sigma, cfg.a11, cfg.a21));
  }
}

TEST(MonteCarlo, ErrorShrinksLikeInverseRootN) {
  const SemConfig cfg{1.0, 0.7, 0.2, 0.5, 0.4};
  const double truth = expected_L2_closed(cfg);
  // chat - c is Gaussian with variance truth, so Var[(chat - c)^2] = 2 truth^2.
  for (std::size_t n : {1000u, 10000u, 100000u, 1000000u}) {
    const double sd = std::sqrt(2.0) * truth / std::sqrt(static_cast<double>(n));
    EXPECT_LT(std::abs(mc_estimate(cfg, n, 11).L2 - truth), 4.0 * sd) << "n=" << n;
  }
}

TEST(MonteCarlo, DegenerateCases) {
  const SemConfig exact{0.0, 1.0, 0.0, 0.0, 1.0};
  const auto losses = mc_losses(exact, 1000, 0);
  EXPECT_EQ(losses.Ly2, 0.0);
  EXPECT_EQ(losses.L2, 0.0);
  EXPECT_THROW(mc_estimate(exact, 1000, 0), Error);
  const auto one = mc_estimate({1.0, 0.3, 0.4, 0.5, 0.6}, 1, 0);
  EXPECT_TRUE(std::isfinite(one.L2) && std::isfinite(one.Lorth));
  EXPECT_EQ(one.used, 1u);
  EXPECT_THROW(mc_estimate(exact, 0, 0), ConfigError);
}

TEST(Minimize, ReachesTheTheoremPointFromRandomInits) {
  Rng rng(5, "inits");
  for (int k = 0; k < 2; ++k) {
    const SemConfig init = {1.0, rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto res = minimize_joint(init, {}, static_cast<std::uint64_t>(k));
    EXPECT_LT(std::abs(res.final.a21), 0.05);
    EXPECT_LT(std::abs(res.final.a12), 0.05);
    EXPECT_LT(std::abs(res.final.a22 - 1.0), 0.05);
    EXPECT_GT(res.trajectory.size(), 10u);
    EXPECT_EQ(res.trajectory.back().step, 5000u);
  }
}

TEST(Minimize, GridOracleAgrees) {
  const auto both_min = testing::both_minimal_grid_points(1.0);
  ASSERT_FALSE(both_min.empty());
  for (const auto& p : both_min) {
    EXPECT_EQ(p[1], 0.0);
    EXPECT_EQ(p[2], 0.0);
    EXPECT_EQ(p[3], 1.0);
  }
  const auto res = minimize_joint({1.0, -0.5, 0.8, 0.9, -0.3}, {}, 3);
  const double nearest =
      testing::distance_to_set({res.final.a11, res.final.a21, res.final.a12, res.final.a22}, both_min);
  EXPECT_LT(nearest, 0.05);

  // With a positive category coefficient the run also matches the grid argmin
  // of the full objective (context predictor at its own optimum).
  const double lambda = MinimizeOptions{}.lambda_orth;
  const auto cat = testing::grid_argmin([&](double a11, double a21) {
    return expected_Ly_closed(1.0, a11, a21) + lambda * cos2_reference(a11, a21, 0.0, 1.0);
  });
  const auto pos = minimize_joint({1.0, 0.5, 0.5, 0.5, 0.5}, {}, 4);
  ASSERT_GT(pos.final.a11, 0.0);
  EXPECT_NEAR(pos.final.a11, cat.first, 0.05);
  EXPECT_NEAR(pos.final.a21, cat.second, 0.05);
}

TEST(Minimize, FixedPointStays) {
  const auto res = minimize_joint({1.0, 1.0, 0.0, 0.0, 1.0}, {}, 0);
  EXPECT_NEAR(res.final.a11, 1.0, 0.01);
  EXPECT_NEAR(res.final.a21, 0.0, 0.01);
  EXPECT_NEAR(res.final.a12, 0.0, 0.01);
  EXPECT_NEAR(res.final.a22, 1.0, 0.01);
}

TEST(Minimize, WithoutOrthPenaltyTheSpuriousFeatureIsUsed) {
  MinimizeOptions opt;
  opt.lambda_orth = 0.0;
  const auto res = minimize_joint({1.0, 0.1, -0.2, 0.3, 0.4}, opt, 1);
  EXPECT_NEAR(res.final.a21, testing::ols_a21(1.0), 0.05);
  EXPECT_GT(std::abs(res.final.a21), 0.3);
}

TEST(Minimize, FullJointVariantRotatesTheContextPredictor) {
  MinimizeOptions opt;
  opt.orth_into_context = true;
  const auto res = minimize_joint({1.0, 0.5, 0.1, 0.2, 0.8}, opt, 2);
  // Orthogonal pair reached by moving a12 away from 0 instead of dropping a21.
  EXPECT_LT(expected_Lorth_closed(res.final), 0.01);
  EXPECT_GT(std::abs(res.final.a21), 0.1);
  EXPECT_GT(std::abs(res.final.a12), 0.1);
}

TEST(Minimize, DeterministicGivenSeed) {
  MinimizeOptions opt;
  opt.steps = 300;
  const SemConfig init{1.0, 0.2, 0.2, 0.2, 0.2};
  EXPECT_EQ(minimize_joint(init, opt, 9).final, minimize_joint(init, opt, 9).final);
}

TEST(Minimize, DivergenceIsReported) {
  MinimizeOptions opt;
  opt.lr = 50.0;
  opt.steps = 200;
  EXPECT_THROW(minimize_joint({1.0, 0.5, 0.5, 0.5, 0.5}, opt, 0), DivergenceError);
}

}  // namespace
}  // namespace oodkit::sem
