// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "oodkit/autodiff.hpp"

namespace oodkit::decaug {

inline constexpr double kMinGradNorm = 1e-12;

/// Batch mean of the squared cosine between per-sample gradients.
/// g1 and g2 are [batch, ...]; row i is sample i. Rows where either norm is
/// below 1e-12, or where `keep[i] == 0`, are excluded from the mean. With no
/// usable row the result is a constant 0.
inline Tensor orth_loss(const Tensor& g1, const Tensor& g2, std::span<const char> keep = {}) {
  if (g1.shape() != g2.shape()) throw ShapeError("orth_loss: gradient shapes differ");
  if (g1.rank() < 1) throw ShapeError("orth_loss: gradients need a batch axis");
  const std::size_t b = g1.dim(0);
  if (!keep.empty() && keep.size() != b) throw ShapeError("orth_loss: keep mask length");
  const Tensor a = reshape(g1, {b, g1.numel() / b});
  const Tensor c = reshape(g2, {b, g2.numel() / b});
  const Tensor n1 = sum(square(a), 1);
  const Tensor n2 = sum(square(c), 1);

  Array mask(Shape{b, 1});
  std::size_t used = 0;
  for (std::size_t i = 0; i < b; ++i) {
    const bool ok = (keep.empty() || keep[i]) && std::sqrt(n1[i]) >= kMinGradNorm && std::sqrt(n2[i]) >= kMinGradNorm;
    mask[i] = ok ? 1.0 : 0.0;
    used += ok;
  }
  if (used == 0) return Tensor::scalar(0.0);
  Array pad(Shape{b, 1});
  for (std::size_t i = 0; i < b; ++i) pad[i] = 1.0 - mask[i];

  // Excluded rows get denominator 1 and numerator 0.
  const Tensor m(std::move(mask));
  const Tensor dot = sum(mul(a, c), 1);
  const Tensor cos2 = div(mul(m, square(dot)), add(mul(n1, n2), Tensor(std::move(pad))));
  return scale(sum(cos2), 1.0 / static_cast<double>(used));
}

}  // namespace oodkit::decaug
