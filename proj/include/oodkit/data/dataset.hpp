// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oodkit/core/array.hpp"
#include "oodkit/core/error.hpp"
#include "oodkit/core/rng.hpp"

namespace oodkit::data {

/// One labeled sample: input x, category label y, context label c and the
/// environment it was drawn from.
struct Example {
  Array x;
  int y = 0;
  int c = 0;
  int env = 0;

  bool operator==(const Example&) const = default;
};

using Dataset = std::vector<Example>;

/// One training or test environment. `correlation` is the probability that
/// color agrees with the label (colored task); `angle_deg` is the rotation
/// (rotated task). The unused field is ignored.
struct EnvSpec {
  int id = 0;
  double correlation = 0.5;
  double angle_deg = 0.0;
  double flip = 0.25;
  std::size_t n = 0;
};

inline std::vector<EnvSpec> default_colored_train(std::size_t n = 5000) {
  return {{0, 0.8, 0.0, 0.25, n}, {1, 0.9, 0.0, 0.25, n}};
}
inline std::vector<EnvSpec> default_colored_test(std::size_t n = 5000) { return {{2, 0.1, 0.0, 0.25, n}}; }
inline std::vector<EnvSpec> default_rotated_train(std::size_t n = 5000) {
  return {{0, 0.5, 60.0, 0.25, n}, {1, 0.5, 90.0, 0.25, n}};
}
inline std::vector<EnvSpec> default_rotated_test(std::size_t n = 5000) { return {{2, 0.5, 180.0, 0.25, n}}; }

/// Stacks the inputs of the selected examples into a [batch, ...] array.
inline Array stack_x(const Dataset& ds, std::span<const std::size_t> idx) {
  if (idx.empty()) throw ShapeError("stack_x: empty selection");
  const Shape& s = ds.at(idx[0]).x.shape();
  Shape out{idx.size()};
  out.insert(out.end(), s.begin(), s.end());
  Array a(out);
  const std::size_t step = numel_of(s);
  auto dst = a.data().begin();
  for (auto i : idx) {
    const auto& x = ds.at(i).x;
    if (x.shape() != s) throw ShapeError("stack_x: ragged inputs " + to_string(x.shape()) + " vs " + to_string(s));
    std::copy(x.data().begin(), x.data().end(), dst);
    dst += static_cast<std::ptrdiff_t>(step);
  }
  return a;
}

inline std::vector<int> gather_y(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.at(i).y);
  return out;
}

inline std::vector<int> gather_c(const Dataset& ds, std::span<const std::size_t> idx) {
  std::vector<int> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(ds.at(i).c);
  return out;
}

inline std::vector<std::size_t> all_indices(const Dataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

/// Seeded shuffle followed by a cut: the first `val_fraction` of the shuffled
/// samples become validation data. Relative order inside each part follows the
/// original order.
inline std::pair<Dataset, Dataset> split_train_val(const Dataset& ds, double val_fraction, std::uint64_t seed) {
  if (val_fraction < 0.0 || val_fraction > 1.0) throw ConfigError("val_fraction", "must lie in [0,1]");
  auto idx = all_indices(ds);
  Rng rng(seed, "split_train_val");
  rng.shuffle(idx.begin(), idx.end());
  const auto n_val = static_cast<std::size_t>(val_fraction * static_cast<double>(ds.size()) + 0.5);
  std::vector<char> is_val(ds.size(), 0);
  for (std::size_t k = 0; k < n_val; ++k) is_val[idx[k]] = 1;
  Dataset train, val;
  for (std::size_t i = 0; i < ds.size(); ++i) (is_val[i] ? val : train).push_back(ds[i]);
  return {std::move(train), std::move(val)};
}

/// Train / validation / test split used by every experiment.
struct Splits {
  Dataset train;
  Dataset val;
  Dataset test;
};

}  // namespace oodkit::data
