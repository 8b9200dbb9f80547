// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic two-class glyph data with a correlation shift (colored) or a
// diversity shift (rotated). Each sample is a 2x8x8 raster: the glyph is drawn
// into exactly one of the two color channels.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "oodkit/core/rng.hpp"
#include "oodkit/data/dataset.hpp"

namespace oodkit::data {

inline constexpr std::size_t kSide = 8;
inline constexpr std::size_t kChannels = 2;
inline constexpr double kPixelNoise = 0.05;

using Raster = std::array<double, kSide * kSide>;

/// Class 0 is a vertical bar, class 1 a ring.
inline Raster base_glyph(int shape) {
  Raster r{};
  for (std::size_t i = 0; i < kSide; ++i) {
    for (std::size_t j = 0; j < kSide; ++j) {
      bool on;
      if (shape == 0) {
        on = i >= 1 && i <= 6 && j >= 3 && j <= 4;
      } else {
        const double d = std::hypot(static_cast<double>(i) - 3.5, static_cast<double>(j) - 3.5);
        on = d >= 1.5 && d <= 3.0;
      }
      r[i * kSide + j] = on ? 1.0 : 0.0;
    }
  }
  return r;
}

/// Shifts content by (dy, dx) pixels; vacated pixels become 0.
inline Raster translate(const Raster& r, int dy, int dx) {
  Raster out{};
  const int n = static_cast<int>(kSide);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const int si = i - dy, sj = j - dx;
      if (si >= 0 && si < n && sj >= 0 && sj < n) out[i * n + j] = r[si * n + sj];
    }
  }
  return out;
}

/// Counter-clockwise rotation about the raster center with nearest-neighbor
/// resampling. Source pixels falling outside the grid read as 0.
inline Raster rotate(const Raster& r, double angle_deg) {
  const double t = angle_deg * std::numbers::pi / 180.0;
  const double cs = std::cos(t), sn = std::sin(t);
  const double c = (static_cast<double>(kSide) - 1.0) / 2.0;
  const long n = static_cast<long>(kSide);
  Raster out{};
  for (long i = 0; i < n; ++i) {
    for (long j = 0; j < n; ++j) {
      // (i, j) = (row, col); rows grow downwards, so y = c - i.
      const double x = static_cast<double>(j) - c, y = c - static_cast<double>(i);
      const double sx = cs * x + sn * y, sy = -sn * x + cs * y;
      const long sj = std::lround(sx + c), si = std::lround(c - sy);
      if (si >= 0 && si < n && sj >= 0 && sj < n) out[i * n + j] = r[si * n + sj];
    }
  }
  return out;
}

/// Jittered, noisy glyph: translation in {-1,0,1}^2 then per-pixel flips.
inline Raster sample_glyph(int shape, double angle_deg, Rng& rng) {
  const int dy = rng.integer(-1, 1), dx = rng.integer(-1, 1);
  Raster r = translate(base_glyph(shape), dy, dx);
  if (angle_deg != 0.0) r = rotate(r, angle_deg);
  for (auto& v : r)
    if (rng.bernoulli(kPixelNoise)) v = 1.0 - v;
  return r;
}

inline Array to_input(const Raster& r, int channel) {
  Array x(Shape{kChannels, kSide, kSide});
  std::copy(r.begin(), r.end(), x.data().begin() + static_cast<std::ptrdiff_t>(channel) * kSide * kSide);
  return x;
}

namespace detail {

inline void validate_envs(const std::vector<EnvSpec>& envs, bool rotated) {
  if (envs.empty()) throw ConfigError("envs", "environment list is empty");
  for (const auto& e : envs) {
    if (!(e.flip >= 0.0 && e.flip <= 1.0)) throw ConfigError("flip", "must lie in [0,1]");
    if (rotated) {
      if (!(e.angle_deg >= 0.0 && e.angle_deg < 360.0)) throw ConfigError("angle_deg", "must lie in [0,360)");
    } else if (!(e.correlation >= 0.0 && e.correlation <= 1.0)) {
      throw ConfigError("correlation", "must lie in [0,1]");
    }
  }
}

inline Rng env_rng(std::uint64_t seed, std::string_view task, int env_id) {
  return Rng(seed, stream_id(task) + static_cast<std::uint64_t>(env_id));
}

}  // namespace detail

/// Correlation-shift data. Per sample: shape class s uniform, y = s flipped
/// with probability `flip`, color = y with probability `correlation`, c = color.
inline Dataset gen_colored(const std::vector<EnvSpec>& envs, std::uint64_t seed) {
  detail::validate_envs(envs, false);
  Dataset out;
  for (const auto& e : envs) {
    Rng rng = detail::env_rng(seed, "gen_colored", e.id);
    for (std::size_t k = 0; k < e.n; ++k) {
      const int shape = static_cast<int>(rng.below(2));
      const Raster r = sample_glyph(shape, 0.0, rng);
      const int y = rng.bernoulli(e.flip) ? 1 - shape : shape;
      const int color = rng.bernoulli(e.correlation) ? y : 1 - y;
      out.push_back({to_input(r, color), y, color, e.id});
    }
  }
  return out;
}

/// Diversity-shift data: glyphs rotated by the environment angle, color drawn
/// independently of the label, c = environment id.
inline Dataset gen_rotated(const std::vector<EnvSpec>& envs, std::uint64_t seed) {
  detail::validate_envs(envs, true);
  Dataset out;
  for (const auto& e : envs) {
    Rng rng = detail::env_rng(seed, "gen_rotated", e.id);
    for (std::size_t k = 0; k < e.n; ++k) {
      const int shape = static_cast<int>(rng.below(2));
      const Raster r = sample_glyph(shape, e.angle_deg, rng);
      const int y = rng.bernoulli(e.flip) ? 1 - shape : shape;
      const int color = static_cast<int>(rng.below(2));
      out.push_back({to_input(r, color), y, e.id, e.id});
    }
  }
  return out;
}

/// Removes color: every channel carries the union of all channels.
inline Dataset to_grayscale(Dataset ds) {
  for (auto& ex : ds) {
    const std::size_t plane = ex.x.numel() / ex.x.dim(0);
    auto d = ex.x.data();
    for (std::size_t p = 0; p < plane; ++p) {
      double m = 0.0;
      for (std::size_t ch = 0; ch < ex.x.dim(0); ++ch) m = std::max(m, d[ch * plane + p]);
      for (std::size_t ch = 0; ch < ex.x.dim(0); ++ch) d[ch * plane + p] = m;
    }
  }
  return ds;
}

/// Applies the colored construction to externally supplied single-channel
/// rasters (e.g. MNIST loaded with load_idx). Environments consume the source
/// in order; each sample keeps its label as the shape class.
inline Dataset colorize(const Dataset& gray, const std::vector<EnvSpec>& envs, std::uint64_t seed) {
  detail::validate_envs(envs, false);
  std::size_t next = 0;
  Dataset out;
  for (const auto& e : envs) {
    if (next + e.n > gray.size()) throw ConfigError("n", "not enough source samples to colorize");
    Rng rng = detail::env_rng(seed, "colorize", e.id);
    for (std::size_t k = 0; k < e.n; ++k, ++next) {
      const Array& g = gray[next].x;
      if (g.rank() != 3 || g.dim(0) != 1) throw ShapeError("colorize expects [1,H,W] inputs");
      const int y = rng.bernoulli(e.flip) ? 1 - gray[next].y : gray[next].y;
      const int color = rng.bernoulli(e.correlation) ? y : 1 - y;
      Array x(Shape{kChannels, g.dim(1), g.dim(2)});
      std::copy(g.data().begin(), g.data().end(),
                x.data().begin() + static_cast<std::ptrdiff_t>(color * g.numel()));
      out.push_back({std::move(x), y, color, e.id});
    }
  }
  return out;
}

}  // namespace oodkit::data
