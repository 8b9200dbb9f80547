// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Architecture search against a generator of synthetic novel-domain data.
// Per minibatch:
//   theta_G <- theta_G - mu_G * grad aux
//   omega   <- omega   - mu_w * grad_omega CE(net(x; alpha), y)
//   theta_G <- theta_G + mu_G * grad_G     CE(net(G(x, novel); alpha), y)
//   alpha   <- alpha   - mu_a * grad_alpha CE(net(G(x, novel); alpha), y)
// The last two share one forward pass after the omega update.

#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "oodkit/core/csv.hpp"
#include "oodkit/data/dataset.hpp"
#include "oodkit/nas/generator.hpp"
#include "oodkit/nas/supernet.hpp"
#include "oodkit/nn/classifier.hpp"

namespace oodkit::nas {

struct SearchOptions {
  CellSpec cell;
  std::size_t epochs = 10;
  std::size_t batch = 64;
  double lr = 0.05;  // shared mu
  // Per-group overrides; <= 0 means use `lr`.
  double lr_omega = 0.0, lr_alpha = 0.0, lr_gen = 0.0;
  double lambda_cycle = 1.0;
  double lambda_ce = 1.0;
  std::size_t gen_channels = 8;
  // Frozen label classifier used by the generator's consistency loss.
  std::size_t pretrain_epochs = 20;
  double pretrain_lr = 0.1;

  double mu_omega() const { return lr_omega > 0 ? lr_omega : lr; }
  double mu_alpha() const { return lr_alpha > 0 ? lr_alpha : lr; }
  double mu_gen() const { return lr_gen > 0 ? lr_gen : lr; }
  bool operator==(const SearchOptions&) const = default;
};

inline void validate(const SearchOptions& o) {
  validate(o.cell);
  if (!(o.lr >= 0.0) || !std::isfinite(o.lr)) throw ConfigError("lr", "must be >= 0");
  if (o.batch == 0) throw ConfigError("batch", "must be >= 1");
  if (!(o.lambda_cycle >= 0.0)) throw ConfigError("lambda_cycle", "must be >= 0");
  if (!(o.lambda_ce >= 0.0)) throw ConfigError("lambda_ce", "must be >= 0");
}

inline nlohmann::json to_json(const SearchOptions& o) {
  return {{"n_nodes", o.cell.n_nodes},       {"channels", o.cell.channels},   {"epochs", o.epochs},
          {"batch", o.batch},                {"lr", o.lr},                    {"lr_omega", o.lr_omega},
          {"lr_alpha", o.lr_alpha},          {"lr_gen", o.lr_gen},            {"lambda_cycle", o.lambda_cycle},
          {"lambda_ce", o.lambda_ce},        {"gen_channels", o.gen_channels}, {"pretrain_epochs", o.pretrain_epochs},
          {"pretrain_lr", o.pretrain_lr}};
}

inline SearchOptions search_options_from_json(const nlohmann::json& j, SearchOptions o = {}) {
  o.cell.n_nodes = j.value("n_nodes", o.cell.n_nodes);
  o.cell.channels = j.value("channels", o.cell.channels);
  o.epochs = j.value("epochs", o.epochs);
  o.batch = j.value("batch", o.batch);
  o.lr = j.value("lr", o.lr);
  o.lr_omega = j.value("lr_omega", o.lr_omega);
  o.lr_alpha = j.value("lr_alpha", o.lr_alpha);
  o.lr_gen = j.value("lr_gen", o.lr_gen);
  o.lambda_cycle = j.value("lambda_cycle", o.lambda_cycle);
  o.lambda_ce = j.value("lambda_ce", o.lambda_ce);
  o.gen_channels = j.value("gen_channels", o.gen_channels);
  o.pretrain_epochs = j.value("pretrain_epochs", o.pretrain_epochs);
  o.pretrain_lr = j.value("pretrain_lr", o.pretrain_lr);
  return o;
}

/// Environment ids of the training split mapped to source-domain indices 0..K-1.
inline std::map<int, int> domain_index(const data::Dataset& train) {
  std::map<int, int> m;
  for (const auto& ex : train) m.emplace(ex.env, 0);
  int k = 0;
  for (auto& [env, idx] : m) idx = k++;
  return m;
}

struct SearchState {
  Supernet net;
  ArchParams arch;
  CondGenerator gen;
  nn::Classifier label_model;  // frozen
};

struct Batch {
  Array x;
  std::vector<int> y;
  std::vector<int> domain;  // source-domain index per sample
};

inline Batch make_batch(const data::Dataset& ds, std::span<const std::size_t> idx, const std::map<int, int>& domains) {
  Batch b{data::stack_x(ds, idx), data::gather_y(ds, idx), {}};
  for (auto i : idx) b.domain.push_back(domains.at(ds[i].env));
  return b;
}

inline Tensor train_loss(const SearchState& s, const Batch& b) {
  return cross_entropy(s.net.forward(Tensor(b.x), s.arch), b.y);
}

/// CE of the supernet on the generator's novel-domain images of the batch.
inline Tensor val_loss(const SearchState& s, const Batch& b) {
  const Tensor syn = generate(s.gen, Tensor(b.x), static_cast<int>(s.gen.novel_domain()));
  return cross_entropy(s.net.forward(syn, s.arch), b.y);
}

struct ValGrads {
  double loss = 0;
  std::vector<Tensor> gen;    // d l_val / d theta_G
  std::vector<Tensor> alpha;  // d l_val / d alpha (normal, reduce)
};

inline ValGrads val_grads(SearchState& s, const Batch& b) {
  Tape tape;
  auto gp = s.gen.params();
  auto ap = s.arch.params();
  nn::ParamList both = gp;
  both.insert(both.end(), ap.begin(), ap.end());
  nn::ParamBinding bind(tape, both);
  const Tensor l = val_loss(s, b);
  if (!std::isfinite(l.item())) throw NonFiniteError("validation loss is not finite");
  auto g = grad(l, bind.leaves());
  ValGrads out;
  out.loss = l.item();
  out.gen.assign(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(gp.size()));
  out.alpha.assign(g.begin() + static_cast<std::ptrdiff_t>(gp.size()), g.end());
  return out;
}

struct StepLosses {
  double aux = 0, cycle = 0, shift = 0, train = 0, val = 0;
};

namespace detail {

template <class F>
auto staged(const char* stage, F&& f) {
  try {
    return f();
  } catch (const NonFiniteError& e) {
    throw DivergenceError(stage, e.what());
  }
}

}  // namespace detail

inline StepLosses search_step(SearchState& s, const Batch& b, const SearchOptions& o) {
  StepLosses out;
  const Tensor x(b.x);

  auto gen_params = s.gen.params();
  auto aux_g = detail::staged("nasood.aux", [&] {
    Tape tape;
    nn::ParamBinding bind(tape, gen_params);
    const AuxLoss a = aux_loss(s.gen, x, b.domain, b.y, s.label_model, o.lambda_cycle, o.lambda_ce);
    if (!std::isfinite(a.total.item())) throw NonFiniteError("aux loss is not finite");
    out.aux = a.total.item();
    out.cycle = a.cycle.item();
    out.shift = a.shift;
    return grad(a.total, bind.leaves());
  });
  nn::sgd_step(gen_params, aux_g, o.mu_gen(), "nasood.aux");

  auto omega = s.net.params();
  auto omega_g = detail::staged("nasood.omega", [&] {
    Tape tape;
    nn::ParamBinding bind(tape, omega);
    const Tensor l = train_loss(s, b);
    if (!std::isfinite(l.item())) throw NonFiniteError("training loss is not finite");
    out.train = l.item();
    return grad(l, bind.leaves());
  });
  nn::sgd_step(omega, omega_g, o.mu_omega(), "nasood.omega");

  const ValGrads vg = detail::staged("nasood.val", [&] { return val_grads(s, b); });
  out.val = vg.loss;
  nn::sgd_step(s.gen.params(), vg.gen, -o.mu_gen(), "nasood.generator_ascent");
  nn::sgd_step(s.arch.params(), vg.alpha, o.mu_alpha(), "nasood.alpha");
  return out;
}

/// Percentage of chosen edges per op type over all cells of all archs.
inline std::array<double, kNumOps> op_stats(const std::vector<DiscreteArch>& archs) {
  if (archs.empty()) throw Error("op_stats: empty architecture list");
  std::array<double, kNumOps> count{};
  double total = 0;
  for (const auto& a : archs)
    for (bool r : {false, true})
      for (const auto& node : a.cell(r))
        for (const auto& ch : node) count[static_cast<std::size_t>(ch.op)] += 1, total += 1;
  for (auto& c : count) c = total > 0 ? 100.0 * c / total : 0.0;
  return count;
}

struct SearchEpoch {
  std::size_t epoch = 0;
  double l_train = 0, l_val_syn = 0, l_aux = 0, l_cycle = 0;  // means over the epoch's batches
  double gen_shift = 0;                                       // mean |G(x, novel) - x| over the epoch
  double test_acc = 0;                                        // supernet under current alpha
  std::array<double, kNumOps> op_pct{};                       // of the current discretization

  bool operator==(const SearchEpoch&) const = default;
};

inline void write_history_csv(std::ostream& os, const std::vector<SearchEpoch>& rows) {
  CsvWriter w(os);
  std::vector<std::string> head{"epoch", "l_train", "l_val_syn", "l_aux", "l_cycle", "gen_shift", "test_acc"};
  for (const char* n : kOpNames) head.push_back(std::string("pct_") + n);
  w.row(head);
  for (const auto& r : rows) {
    std::vector<std::string> f{format_number(r.epoch), format_number(r.l_train), format_number(r.l_val_syn),
                               format_number(r.l_aux), format_number(r.l_cycle), format_number(r.gen_shift),
                               format_number(r.test_acc)};
    for (double p : r.op_pct) f.push_back(format_number(p));
    w.row(f);
  }
}

struct SearchResult {
  DiscreteArch arch;
  ArchParams alpha;
  std::vector<SearchEpoch> history;
  std::vector<DiscreteArch> arch_per_epoch;  // discretization after each epoch
  std::size_t supernet_params = 0;
};

inline std::size_t in_channels(const data::Dataset& ds) {
  if (ds.empty() || ds[0].x.shape().size() != 3) throw ConfigError("dataset", "search needs [C, H, W] images");
  return ds[0].x.shape()[0];
}

inline std::size_t n_classes(const data::Splits& s) {
  int m = 1;
  for (const auto* ds : {&s.train, &s.val, &s.test})
    for (const auto& ex : *ds) m = std::max(m, ex.y);
  return static_cast<std::size_t>(m) + 1;
}

/// Builds the initial search state: zero (uniform) alpha, fresh supernet and
/// generator, and a label classifier pretrained on the pooled training data.
inline SearchState init_search(const data::Splits& splits, const SearchOptions& o, std::uint64_t seed) {
  validate(o);
  const auto domains = domain_index(splits.train);
  if (domains.size() < 2) throw ConfigError("dataset", "search needs at least two source environments");
  const std::size_t c = in_channels(splits.train);
  const std::size_t k = n_classes(splits);
  SearchState s;
  s.arch = init_arch(o.cell);
  s.net = make_supernet(o.cell, c, k, seed);
  s.gen = make_generator(c, domains.size(), o.gen_channels, seed);
  nn::BackboneSpec spec;
  spec.kind = nn::BackboneKind::kConv;
  spec.sample_shape = splits.train[0].x.shape();
  s.label_model = nn::make_classifier(spec, k, seed);
  nn::SgdOptions pre{o.pretrain_lr, 64, o.pretrain_epochs};
  data::Splits pool{splits.train, {}, {}};
  nn::train_ce(s.label_model, s.label_model.params(), pool, pre, seed, "nasood.pretrain");
  return s;
}

using SearchCallback = std::function<void(const SearchEpoch&, const SearchState&)>;

inline SearchResult search(const data::Splits& splits, const SearchOptions& o, std::uint64_t seed,
                           const SearchCallback& on_epoch = {}) {
  SearchState s = init_search(splits, o, seed);
  const auto domains = domain_index(splits.train);
  Rng rng(seed, "nasood_search");
  auto order = data::all_indices(splits.train);
  const std::size_t n = order.size(), bs = std::min(o.batch, n);
  SearchResult res;
  res.supernet_params = nn::count_params(s.net.params());

  for (std::size_t epoch = 1; epoch <= o.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    SearchEpoch m;
    m.epoch = epoch;
    std::size_t steps = 0;
    for (std::size_t at = 0; at < n; at += bs, ++steps) {
      const std::span<const std::size_t> idx(order.data() + at, std::min(bs, n - at));
      const StepLosses l = search_step(s, make_batch(splits.train, idx, domains), o);
      m.l_train += l.train, m.l_val_syn += l.val, m.l_aux += l.aux, m.l_cycle += l.cycle, m.gen_shift += l.shift;
    }
    const double k = static_cast<double>(steps);
    m.l_train /= k, m.l_val_syn /= k, m.l_aux /= k, m.l_cycle /= k, m.gen_shift /= k;
    m.test_acc = nn::accuracy([&](const Tensor& x) { return s.net.forward(x, s.arch); }, splits.test);
    res.arch_per_epoch.push_back(discretize(s.arch, o.cell));
    m.op_pct = op_stats({res.arch_per_epoch.back()});
    res.history.push_back(m);
    if (on_epoch) on_epoch(m, s);
  }
  res.arch = discretize(s.arch, o.cell);
  res.alpha = s.arch;
  return res;
}

struct RetrainResult {
  double train_acc = 0, val_acc = 0, test_acc = 0;
  std::size_t n_params = 0;
  std::vector<nn::ErmEpoch> history;
  Supernet net;  // trained; only the ops of the architecture are meaningful
};

/// Trains the discrete network from a fresh initialization with plain
/// cross-entropy on the pooled training environments.
inline RetrainResult retrain(const DiscreteArch& d, const data::Splits& splits, const CellSpec& cell,
                             const nn::SgdOptions& opt, std::uint64_t seed) {
  if (auto err = check(d, cell); !err.empty()) throw ConfigError("arch", err);
  RetrainResult r;
  r.net = make_supernet(cell, in_channels(splits.train), n_classes(splits), seed);
  const nn::ParamList params = r.net.params(d);
  auto model = [&](const Tensor& x) { return r.net.forward(x, d); };
  r.n_params = nn::count_params(params);
  r.history = nn::train_ce(model, params, splits, opt, seed, "nasood.retrain");
  r.train_acc = nn::accuracy(model, splits.train);
  r.val_acc = nn::accuracy(model, splits.val);
  r.test_acc = nn::accuracy(model, splits.test);
  return r;
}

}  // namespace oodkit::nas
