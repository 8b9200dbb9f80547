// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Backbone + linear head trained with plain cross-entropy. Serves as the ERM
// baseline and as the frozen label classifier of the NAS generator.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "oodkit/autodiff.hpp"
#include "oodkit/data/dataset.hpp"
#include "oodkit/nn/backbone.hpp"
#include "oodkit/nn/checkpoint.hpp"

namespace oodkit::nn {

struct Classifier {
  Backbone g;
  Linear head;

  Tensor operator()(const Tensor& x) const { return head(g(x)); }

  std::vector<NamedGroup> groups() {
    NamedGroup a{"backbone", {}}, b{"classifier", {}};
    g.collect(a.params);
    head.collect(b.params);
    return {a, b};
  }
  ParamList params() {
    ParamList out;
    g.collect(out);
    head.collect(out);
    return out;
  }
};

inline Classifier make_classifier(const BackboneSpec& spec, std::size_t n_classes, std::uint64_t seed) {
  if (n_classes < 2) throw ConfigError("n_classes", "must be >= 2");
  Rng rng(seed, "classifier_init");
  Classifier c;
  c.g = Backbone(spec, rng);
  c.head = Linear(c.g.out_dim(), n_classes, rng);
  return c;
}

struct SgdOptions {
  double lr = 0.1;
  std::size_t batch = 256;  // 0 means the whole training set
  std::size_t epochs = 60;
  double momentum = 0.0;

  bool operator==(const SgdOptions&) const = default;
};

inline void validate(const SgdOptions& o) {
  if (!(o.lr > 0.0) || !std::isfinite(o.lr)) throw ConfigError("lr", "must be > 0");
  if (!(o.momentum >= 0.0 && o.momentum < 1.0)) throw ConfigError("momentum", "must be in [0, 1)");
}

/// Accuracy of argmax(model(x)) with lowest-index tie-breaking.
template <class Model>
double accuracy(const Model& model, const data::Dataset& ds, std::size_t chunk = 1024) {
  if (ds.empty()) return 0.0;
  const auto idx = data::all_indices(ds);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < idx.size(); s += chunk) {
    const std::span<const std::size_t> part(idx.data() + s, std::min(chunk, idx.size() - s));
    const auto pred = argmax_rows(model(Tensor(data::stack_x(ds, part))).value());
    for (std::size_t i = 0; i < part.size(); ++i) correct += pred[i] == ds[part[i]].y;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct ErmEpoch {
  std::size_t epoch = 0;
  double loss = 0;  // mean over the epoch's batches
  double train_acc = 0, val_acc = 0, test_acc = 0;

  bool operator==(const ErmEpoch&) const = default;
};

/// Minibatch SGD on cross-entropy over `params`, with batches drawn from a
/// per-epoch shuffle of Rng(seed, stream).
template <class Model>
std::vector<ErmEpoch> train_ce(Model& model, const ParamList& params, const data::Splits& splits,
                               const SgdOptions& opt, std::uint64_t seed, const std::string& stage,
                               const std::function<void(const ErmEpoch&)>& on_epoch = {}) {
  validate(opt);
  if (splits.train.empty()) throw ConfigError("dataset", "training split is empty");
  Rng rng(seed, stage);
  auto order = data::all_indices(splits.train);
  const std::size_t n = order.size();
  const std::size_t bs = opt.batch == 0 ? n : std::min(opt.batch, n);
  MomentumSgd optim(opt.momentum);
  std::vector<ErmEpoch> history;
  for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    ErmEpoch m;
    m.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t s = 0; s < n; s += bs, ++steps) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(bs, n - s));
      const Array xb = data::stack_x(splits.train, idx);
      const auto y = data::gather_y(splits.train, idx);
      std::vector<Tensor> grads;
      try {
        Tape tape;
        ParamBinding bind(tape, params);
        const Tensor loss = cross_entropy(model(Tensor(xb)), y);
        if (!std::isfinite(loss.item())) throw NonFiniteError("loss is not finite");
        grads = grad(loss, bind.leaves());
        m.loss += loss.item();
      } catch (const NonFiniteError& e) {
        throw DivergenceError(stage, std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(steps) + ")");
      }
      optim.step(params, grads, opt.lr, stage.c_str());
    }
    m.loss /= static_cast<double>(steps);
    m.train_acc = accuracy(model, splits.train);
    m.val_acc = accuracy(model, splits.val);
    m.test_acc = accuracy(model, splits.test);
    history.push_back(m);
    if (on_epoch) on_epoch(m);
  }
  return history;
}

}  // namespace oodkit::nn
