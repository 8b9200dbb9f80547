// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-branch feature decomposition with gradient orthogonality and
// gradient-based augmentation of the context feature:
//
//   z = g(x),  z1 = f1(z),  z2 = f2(z)
//   L1 = CE(h1(z1), y),  L2 = CE(h2(z2), c)
//   Lorth = mean_i cos^2(grad_z l1_i, grad_z l2_i)
//   z2~ = z2 + alpha * eps * G / |G|,  G = grad_{z2} CE(h2(z2), c)
//   L = CE(h([z1, z2~]), y) + lambda1 L1 + lambda2 L2 + lambda_orth Lorth

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "oodkit/autodiff.hpp"
#include "oodkit/core/csv.hpp"
#include "oodkit/core/error.hpp"
#include "oodkit/data/dataset.hpp"
#include "oodkit/decaug/orth.hpp"
#include "oodkit/nn/backbone.hpp"
#include "oodkit/nn/checkpoint.hpp"

namespace oodkit::decaug {

/// How the orthogonality term is differentiated.
enum class OrthGrad {
  kFull,        // through the branch parameters and, via z, the backbone
  kBranchOnly,  // z is held fixed; only f1, h1, f2, h2 receive gradient
  kDetached,    // G1, G2 are constants; Lorth is reported but not trained on
};

inline std::string to_string(OrthGrad m) {
  switch (m) {
    case OrthGrad::kBranchOnly:
      return "branch";
    case OrthGrad::kDetached:
      return "detached";
    case OrthGrad::kFull:
    default:
      return "full";
  }
}

inline OrthGrad orth_grad_from_string(const std::string& s) {
  if (s == "full") return OrthGrad::kFull;
  if (s == "branch") return OrthGrad::kBranchOnly;
  if (s == "detached") return OrthGrad::kDetached;
  throw ConfigError("orth_grad", "expected full, branch or detached, got '" + s + "'");
}

struct DecAugHyper {
  double eps = 1.0;
  double lambda1 = 1.0;
  double lambda2 = 1.0;
  double lambda_orth = 0.01;
  double lr = 0.1;
  std::size_t batch = 256;  // 0 means the whole training set
  std::size_t epochs = 60;
  OrthGrad orth_grad = OrthGrad::kFull;
  bool use_concat = true;  // false: predict with h1(f1(z)) and drop Lconcat

  bool operator==(const DecAugHyper&) const = default;
};

inline void validate(const DecAugHyper& h) {
  if (!(h.eps > 0.0) || !std::isfinite(h.eps)) throw ConfigError("eps", "must be > 0");
  if (!(h.lambda1 >= 0.0)) throw ConfigError("lambda1", "must be >= 0");
  if (!(h.lambda2 >= 0.0)) throw ConfigError("lambda2", "must be >= 0");
  if (!(h.lambda_orth >= 0.0)) throw ConfigError("lambda_orth", "must be >= 0");
  if (!(h.lr > 0.0) || !std::isfinite(h.lr)) throw ConfigError("lr", "must be > 0");
}

inline nlohmann::json to_json(const DecAugHyper& h) {
  return {{"eps", h.eps},
          {"lambda1", h.lambda1},
          {"lambda2", h.lambda2},
          {"lambda_orth", h.lambda_orth},
          {"lr", h.lr},
          {"batch", h.batch},
          {"epochs", h.epochs},
          {"orth_grad", to_string(h.orth_grad)},
          {"use_concat", h.use_concat}};
}

inline DecAugHyper hyper_from_json(const nlohmann::json& j, DecAugHyper h = {}) {
  h.eps = j.value("eps", h.eps);
  h.lambda1 = j.value("lambda1", h.lambda1);
  h.lambda2 = j.value("lambda2", h.lambda2);
  h.lambda_orth = j.value("lambda_orth", h.lambda_orth);
  h.lr = j.value("lr", h.lr);
  h.batch = j.value("batch", h.batch);
  h.epochs = j.value("epochs", h.epochs);
  if (j.contains("orth_grad")) h.orth_grad = orth_grad_from_string(j.at("orth_grad").get<std::string>());
  h.use_concat = j.value("use_concat", h.use_concat);
  return h;
}

struct DecAugNet {
  nn::Backbone g;
  nn::Linear f1, h1;  // category branch
  nn::Linear f2, h2;  // context branch
  nn::Linear h;       // concat head on [z1, z2]
  std::size_t n_classes = 2;
  std::size_t n_contexts = 2;

  std::size_t feature_dim() const { return f1.out_features(); }

  std::vector<nn::NamedGroup> groups() {
    std::array<std::pair<const char*, nn::ParamList>, 6> gs;
    gs[0].first = "backbone", g.collect(gs[0].second);
    gs[1].first = "category_extractor", f1.collect(gs[1].second);
    gs[2].first = "category_classifier", h1.collect(gs[2].second);
    gs[3].first = "context_extractor", f2.collect(gs[3].second);
    gs[4].first = "context_classifier", h2.collect(gs[4].second);
    gs[5].first = "concat_classifier", h.collect(gs[5].second);
    std::vector<nn::NamedGroup> out;
    for (auto& [name, ps] : gs) out.push_back({name, std::move(ps)});
    return out;
  }

  nn::ParamList params() {
    nn::ParamList out;
    for (auto& grp : groups()) out.insert(out.end(), grp.params.begin(), grp.params.end());
    return out;
  }
};

inline DecAugNet make_net(const nn::BackboneSpec& spec, std::size_t n_classes, std::size_t n_contexts,
                          std::uint64_t seed, std::size_t feature_dim = 32) {
  if (n_classes < 2) throw ConfigError("n_classes", "must be >= 2");
  if (n_contexts < 2) throw ConfigError("n_contexts", "must be >= 2");
  if (feature_dim == 0) throw ConfigError("feature_dim", "must be >= 1");
  Rng rng(seed, "decaug_init");
  DecAugNet net;
  net.g = nn::Backbone(spec, rng);
  const std::size_t z = net.g.out_dim();
  net.f1 = nn::Linear(z, feature_dim, rng);
  net.h1 = nn::Linear(feature_dim, n_classes, rng);
  net.f2 = nn::Linear(z, feature_dim, rng);
  net.h2 = nn::Linear(feature_dim, n_contexts, rng);
  net.h = nn::Linear(2 * feature_dim, n_classes, rng);
  net.n_classes = n_classes;
  net.n_contexts = n_contexts;
  return net;
}

namespace detail {

inline void check_labels(std::span<const int> labels, std::size_t n, const char* what) {
  for (int v : labels)
    if (v < 0 || static_cast<std::size_t>(v) >= n)
      throw Error(std::string("decaug: ") + what + " label " + std::to_string(v) + " outside [0, " +
                  std::to_string(n) + ")");
}

inline nn::Linear detached(const nn::Linear& l) {
  nn::Linear out;
  out.weight = detach(l.weight);
  out.bias = detach(l.bias);
  return out;
}

// The tape any of these tensors is recorded on, or null.
inline Tape* find_tape(std::initializer_list<const Tensor*> ts) {
  for (const auto* t : ts)
    if (t->tracked()) return t->tape();
  return nullptr;
}

}  // namespace detail

struct BranchOutputs {
  Tensor L1, L2;
  Tensor z, z1, z2;
};

inline BranchOutputs branch_losses(const DecAugNet& net, const Tensor& x, std::span<const int> y,
                                   std::span<const int> c) {
  if (x.rank() < 1 || x.dim(0) == 0) throw ShapeError("branch_losses: empty batch");
  if (y.size() != x.dim(0) || c.size() != x.dim(0)) throw ShapeError("branch_losses: label count != batch size");
  detail::check_labels(y, net.n_classes, "category");
  detail::check_labels(c, net.n_contexts, "context");
  BranchOutputs out;
  out.z = net.g(x);
  out.z1 = net.f1(out.z);
  out.z2 = net.f2(out.z);
  out.L1 = cross_entropy(net.h1(out.z1), y);
  out.L2 = cross_entropy(net.h2(out.z2), c);
  return out;
}

/// Lorth on features z. Per-sample gradients come from the summed losses;
/// row i of grad_z sum_j l_j only depends on sample i.
inline Tensor orth_term(const DecAugNet& net, const Tensor& z, std::span<const int> y, std::span<const int> c,
                        OrthGrad mode = OrthGrad::kFull) {
  Tape* tp = detail::find_tape({&z, &net.f1.weight, &net.h1.weight, &net.f2.weight, &net.h2.weight});
  std::optional<Tape> local;
  if (!tp) tp = &local.emplace();
  const Tensor zin = (mode == OrthGrad::kFull && z.tracked()) ? z : tp->leaf(detach(z));
  const bool create = mode != OrthGrad::kDetached;
  const Tensor g1 = grad(cross_entropy(net.h1(net.f1(zin)), y, Reduction::kSum), {zin}, create)[0];
  const Tensor g2 = grad(cross_entropy(net.h2(net.f2(zin)), c, Reduction::kSum), {zin}, create)[0];
  const Tensor lo = orth_loss(g1, g2);
  return local ? detach(lo) : lo;
}

/// Unit rows G/|G| with G = grad_{z2} CE(h2(z2), c), computed on constants.
/// Rows with |G| < 1e-12 are zero.
inline Array augment_direction(const DecAugNet& net, const Tensor& z2, std::span<const int> c) {
  Tape tape;
  const Tensor zl = tape.leaf(detach(z2));
  const nn::Linear head = detail::detached(net.h2);
  Array g = grad(cross_entropy(head(zl), c, Reduction::kSum), {zl})[0].value();
  const std::size_t b = g.dim(0), d = g.numel() / b;
  for (std::size_t i = 0; i < b; ++i) {
    double n = 0.0;
    for (std::size_t k = 0; k < d; ++k) n += g[i * d + k] * g[i * d + k];
    n = std::sqrt(n);
    for (std::size_t k = 0; k < d; ++k) g[i * d + k] = n < kMinGradNorm ? 0.0 : g[i * d + k] / n;
  }
  return g;
}

/// z2 + alpha_i * eps * dir_i, with dir held constant.
inline Tensor augment_context(const Tensor& z2, const Array& dir, double eps, std::span<const double> alpha) {
  if (dir.shape() != z2.shape()) throw ShapeError("augment_context: direction shape " + oodkit::to_string(dir.shape()));
  const std::size_t b = z2.dim(0), d = z2.numel() / b;
  if (alpha.size() != b) throw ShapeError("augment_context: need one alpha per sample");
  Array step(z2.shape());
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t k = 0; k < d; ++k) step[i * d + k] = alpha[i] * eps * dir[i * d + k];
  return add(z2, Tensor(std::move(step)));
}

inline Tensor augment_context(const Tensor& z2, std::span<const int> c, const DecAugNet& net, double eps,
                              std::span<const double> alpha) {
  return augment_context(z2, augment_direction(net, z2, c), eps, alpha);
}

struct LossParts {
  Tensor total, L1, L2, Lorth, Lconcat;
};

/// The training objective on one batch. `alpha` holds the per-sample
/// augmentation fractions; `dir` overrides the augmentation direction (it is
/// a constant of the objective either way).
inline LossParts total_loss(const DecAugNet& net, const Tensor& x, std::span<const int> y, std::span<const int> c,
                            const DecAugHyper& hp, std::span<const double> alpha, const Array* dir = nullptr) {
  BranchOutputs b = branch_losses(net, x, y, c);
  LossParts out;
  out.L1 = b.L1;
  out.L2 = b.L2;
  out.Lorth = orth_term(net, b.z, y, c, hp.orth_grad);
  Tensor total = add(scale(b.L1, hp.lambda1), scale(b.L2, hp.lambda2));
  total = add(total, scale(out.Lorth, hp.lambda_orth));
  if (hp.use_concat) {
    const Tensor z2t = dir ? augment_context(b.z2, *dir, hp.eps, alpha) : augment_context(b.z2, c, net, hp.eps, alpha);
    out.Lconcat = cross_entropy(net.h(concat({b.z1, z2t}, 1)), y);
    total = add(out.Lconcat, total);
  } else {
    out.Lconcat = Tensor::scalar(0.0);
  }
  out.total = total;
  return out;
}

/// Class logits without augmentation.
inline Tensor predict(const DecAugNet& net, const Tensor& x, bool use_concat = true) {
  const Tensor z = net.g(x);
  const Tensor z1 = net.f1(z);
  if (!use_concat) return net.h1(z1);
  return net.h(concat({z1, net.f2(z)}, 1));
}

inline double evaluate(const DecAugNet& net, const data::Dataset& ds, bool use_concat = true,
                       std::size_t chunk = 1024) {
  if (ds.empty()) return 0.0;
  const auto idx = data::all_indices(ds);
  std::size_t correct = 0;
  for (std::size_t s = 0; s < idx.size(); s += chunk) {
    const std::span<const std::size_t> part(idx.data() + s, std::min(chunk, idx.size() - s));
    const auto pred = argmax_rows(predict(net, Tensor(data::stack_x(ds, part)), use_concat).value());
    for (std::size_t i = 0; i < part.size(); ++i) correct += pred[i] == ds[part[i]].y;
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

struct EpochMetrics {
  std::size_t epoch = 0;
  double L1 = 0, L2 = 0, Lorth = 0, Lconcat = 0;  // means over the epoch's batches
  double train_acc = 0, val_acc = 0, test_acc = 0;

  bool operator==(const EpochMetrics&) const = default;
};

inline const std::vector<std::string>& metrics_header() {
  static const std::vector<std::string> h{"epoch", "L1", "L2", "Lorth", "Lconcat", "train_acc", "val_acc", "test_acc"};
  return h;
}

inline void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& rows) {
  CsvWriter w(os);
  w.row(metrics_header());
  for (const auto& r : rows)
    w.row({format_number(r.epoch), format_number(r.L1), format_number(r.L2), format_number(r.Lorth),
           format_number(r.Lconcat), format_number(r.train_acc), format_number(r.val_acc), format_number(r.test_acc)});
}

/// Called after each epoch; may be empty.
using EpochCallback = std::function<void(const EpochMetrics&, DecAugNet&)>;

/// Minibatch SGD on the pooled training environments. Batches follow a
/// per-epoch shuffle and alpha is drawn per sample, both from
/// Rng(seed, "decaug_train").
inline std::vector<EpochMetrics> train(DecAugNet& net, const data::Splits& splits, const DecAugHyper& hp,
                                       std::uint64_t seed, const EpochCallback& on_epoch = {}) {
  validate(hp);
  if (splits.train.empty()) throw ConfigError("dataset", "training split is empty");
  Rng rng(seed, "decaug_train");
  auto order = data::all_indices(splits.train);
  const std::size_t n = order.size();
  const std::size_t bs = hp.batch == 0 ? n : std::min(hp.batch, n);
  const nn::ParamList params = net.params();
  std::vector<EpochMetrics> history;

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    EpochMetrics m;
    m.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t s = 0; s < n; s += bs, ++steps) {
      const std::span<const std::size_t> idx(order.data() + s, std::min(bs, n - s));
      const Array xb = data::stack_x(splits.train, idx);
      const auto y = data::gather_y(splits.train, idx);
      const auto c = data::gather_c(splits.train, idx);
      std::vector<double> alpha(idx.size());
      for (auto& a : alpha) a = rng.uniform();

      std::vector<Tensor> grads;
      try {
        Tape tape;
        nn::ParamBinding bind(tape, params);
        const LossParts lp = total_loss(net, Tensor(xb), y, c, hp, alpha);
        if (!std::isfinite(lp.total.item())) throw NonFiniteError("total loss is not finite");
        grads = grad(lp.total, bind.leaves());
        for (auto& g : grads) g = detach(g);
        m.L1 += lp.L1.item(), m.L2 += lp.L2.item(), m.Lorth += lp.Lorth.item(), m.Lconcat += lp.Lconcat.item();
      } catch (const NonFiniteError& e) {
        throw DivergenceError("decaug.train",
                              std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", step " +
                                  std::to_string(steps) + ")");
      }
      nn::sgd_step(params, grads, hp.lr, "decaug.train");
    }
    const double k = static_cast<double>(steps);
    m.L1 /= k, m.L2 /= k, m.Lorth /= k, m.Lconcat /= k;
    m.train_acc = evaluate(net, splits.train, hp.use_concat);
    m.val_acc = evaluate(net, splits.val, hp.use_concat);
    m.test_acc = evaluate(net, splits.test, hp.use_concat);
    history.push_back(m);
    if (on_epoch) on_epoch(m, net);
  }
  return history;
}

inline void save(const std::filesystem::path& path, DecAugNet& net, const DecAugHyper& hp, std::uint64_t seed,
                 std::size_t epoch) {
  nlohmann::json meta = {{"model", "decaug"},
                         {"backbone", nn::to_string(net.g.spec.kind)},
                         {"sample_shape", net.g.spec.sample_shape},
                         {"n_classes", net.n_classes},
                         {"n_contexts", net.n_contexts},
                         {"feature_dim", net.feature_dim()},
                         {"hyper", to_json(hp)},
                         {"seed", seed},
                         {"epoch", epoch}};
  nn::save_checkpoint(path, net.groups(), meta);
}

inline nlohmann::json load(const std::filesystem::path& path, DecAugNet& net) {
  return nn::load_checkpoint(path, net.groups());
}

}  // namespace oodkit::decaug
