// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Random search states and frozen batches for checking the signs of the
// generator and architecture updates.

#pragma once

#include <cstdint>

#include "oodkit/nas/nasood.hpp"

namespace oodkit::testing {

struct FrozenProblem {
  nas::SearchState state;
  nas::Batch batch;
};

/// Untrained supernet, random (non-uniform) architecture logits, fresh
/// generator, and a random 8x8 batch from two source domains.
inline FrozenProblem random_problem(std::uint64_t seed, std::size_t batch = 6) {
  Rng rng(seed, "frozen_problem");
  nas::CellSpec cell;
  cell.channels = 4;
  FrozenProblem p;
  p.state.net = nas::make_supernet(cell, 2, 2, seed);
  p.state.arch = nas::init_arch(cell, 1.0, seed);
  p.state.gen = nas::make_generator(2, 2, 4, seed);
  nn::BackboneSpec spec;
  spec.kind = nn::BackboneKind::kConv;
  p.state.label_model = nn::make_classifier(spec, 2, seed);
  p.batch.x = Array(Shape{batch, 2, 8, 8});
  for (auto& v : p.batch.x.data()) v = rng.uniform();
  for (std::size_t i = 0; i < batch; ++i) {
    p.batch.y.push_back(rng.integer(0, 1));
    p.batch.domain.push_back(rng.integer(0, 1));
  }
  return p;
}

struct StepChange {
  double before = 0, after = 0;
};

/// l_val before and after one generator ascent step with omega and alpha frozen.
inline StepChange generator_ascent(FrozenProblem p, double lr) {
  StepChange c;
  c.before = nas::val_loss(p.state, p.batch).item();
  const auto g = nas::val_grads(p.state, p.batch);
  nn::sgd_step(p.state.gen.params(), g.gen, -lr);
  c.after = nas::val_loss(p.state, p.batch).item();
  return c;
}

/// l_val before and after one alpha descent step with omega and theta_G frozen.
inline StepChange alpha_descent(FrozenProblem p, double lr) {
  StepChange c;
  c.before = nas::val_loss(p.state, p.batch).item();
  const auto g = nas::val_grads(p.state, p.batch);
  nn::sgd_step(p.state.arch.params(), g.alpha, lr);
  c.after = nas::val_loss(p.state, p.batch).item();
  return c;
}

}  // namespace oodkit::testing
