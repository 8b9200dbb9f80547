// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "oodkit/core/error.hpp"
#include "oodkit/core/rng.hpp"

namespace oodkit::data {

struct SemSample {
  double x1 = 0.0;
  double x2 = 0.0;
  double y = 0.0;
  double c = 0.0;
};

/// Linear-Gaussian structural equation model:
///   X1 ~ N(0, s^2),  Y = X1 + N(0, s^2),  X2 = Y + N(0, 1),  C = X2 + N(0, s^2).
/// Draws are ordered (n1, n2, n3, n4) per sample so that the stream is stable.
inline SemSample sem_draw(double sigma, Rng& rng) {
  SemSample s;
  s.x1 = sigma * rng.normal();
  s.y = s.x1 + sigma * rng.normal();
  s.x2 = s.y + rng.normal();
  s.c = s.x2 + sigma * rng.normal();
  return s;
}

inline std::vector<SemSample> sem_sample(double sigma, std::size_t n, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw ConfigError("sigma", "must be >= 0");
  if (n == 0) throw ConfigError("n", "must be >= 1");
  Rng rng(seed, "sem_sample");
  std::vector<SemSample> out(n);
  for (auto& s : out) s = sem_draw(sigma, rng);
  return out;
}

}  // namespace oodkit::data
