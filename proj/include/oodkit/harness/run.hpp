// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// run(config) dispatches to the task and writes one directory per run:
//
//   config.json    resolved config (re-running it reproduces the run)
//   metrics.csv    per-epoch (or per-step) metrics; byte-identical across reruns
//   report.json    RunReport: config echo, metrics rows, final accuracies,
//                  method summary, wall-clock, artifact paths
//   checkpoints/   final parameters
//
// plus task-specific CSV/JSON files listed under "artifacts" in the report.
// Every random stream is Rng(seed, <stage name>) with the config seed.

#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "oodkit/core/bytes.hpp"
#include "oodkit/core/csv.hpp"
#include "oodkit/data/idx.hpp"
#include "oodkit/data/synth.hpp"
#include "oodkit/harness/config.hpp"

namespace oodkit::harness {

// ---- tables ---------------------------------------------------------------------

/// Numeric table written both as CSV and as JSON rows of the report.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void write_csv(std::ostream& os) const {
    CsvWriter w(os);
    w.row(header);
    for (const auto& r : rows) {
      std::vector<std::string> f;
      for (double v : r) f.push_back(format_number(v));
      w.row(f);
    }
  }
  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& r : rows) {
      nlohmann::json o;
      for (std::size_t i = 0; i < header.size(); ++i) o[header[i]] = r[i];
      out.push_back(o);
    }
    return out;
  }
};

inline void write_table(const std::filesystem::path& path, const Table& t) {
  auto os = open_for_write(path.string());
  t.write_csv(os);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  auto os = open_for_write(path.string());
  os << j.dump(2) << '\n';
}

inline Table erm_table(const std::vector<nn::ErmEpoch>& h) {
  Table t{{"epoch", "loss", "train_acc", "val_acc", "test_acc"}, {}};
  for (const auto& m : h)
    t.rows.push_back({static_cast<double>(m.epoch), m.loss, m.train_acc, m.val_acc, m.test_acc});
  return t;
}

inline Table decaug_table(const std::vector<decaug::EpochMetrics>& h) {
  Table t{decaug::metrics_header(), {}};
  for (const auto& m : h)
    t.rows.push_back(
        {static_cast<double>(m.epoch), m.L1, m.L2, m.Lorth, m.Lconcat, m.train_acc, m.val_acc, m.test_acc});
  return t;
}

inline Table search_table(const std::vector<nas::SearchEpoch>& h) {
  Table t{{"epoch", "l_train", "l_val_syn", "l_aux", "l_cycle", "gen_shift", "test_acc"}, {}};
  for (const char* n : nas::kOpNames) t.header.push_back(std::string("pct_") + n);
  for (const auto& m : h) {
    std::vector<double> r{static_cast<double>(m.epoch), m.l_train, m.l_val_syn, m.l_aux, m.l_cycle, m.gen_shift,
                          m.test_acc};
    r.insert(r.end(), m.op_pct.begin(), m.op_pct.end());
    t.rows.push_back(r);
  }
  return t;
}

// ---- data -------------------------------------------------------------------------

inline std::size_t n_classes(const data::Splits& s) {
  int m = 1;
  for (const auto* ds : {&s.train, &s.val, &s.test})
    for (const auto& ex : *ds) m = std::max(m, ex.y);
  return static_cast<std::size_t>(m) + 1;
}

/// Context vocabulary seen in training (test environments may carry new ids).
inline std::size_t n_contexts(const data::Dataset& train) {
  int m = 1;
  for (const auto& ex : train) m = std::max(m, ex.c);
  return static_cast<std::size_t>(m) + 1;
}

inline data::Splits make_splits(const ExperimentConfig& c) {
  const std::uint64_t seed = c.require_seed();
  const auto train_envs = c.resolved_train_envs(), test_envs = c.resolved_test_envs();
  std::set<int> ids;
  for (const auto* list : {&train_envs, &test_envs})
    for (const auto& e : *list)
      if (!ids.insert(e.id).second) throw ConfigError("test_envs", "environment ids must be distinct");

  data::Dataset train, test;
  const bool colored = c.data_task() == "colored";
  if (!c.idx_images.empty()) {
    auto all_envs = train_envs;
    all_envs.insert(all_envs.end(), test_envs.begin(), test_envs.end());
    const auto all = data::colorize(data::load_idx(c.idx_images, c.idx_labels), all_envs, seed);
    std::set<int> test_ids;
    for (const auto& e : test_envs) test_ids.insert(e.id);
    for (const auto& ex : all) (test_ids.contains(ex.env) ? test : train).push_back(ex);
  } else if (colored) {
    train = data::gen_colored(train_envs, seed);
    test = data::gen_colored(test_envs, seed);
  } else {
    train = data::gen_rotated(train_envs, seed);
    test = data::gen_rotated(test_envs, seed);
  }
  auto [tr, va] = data::split_train_val(train, c.val_fraction, seed);
  data::Splits s{std::move(tr), std::move(va), std::move(test)};
  if (c.grayscale) {
    s.train = data::to_grayscale(std::move(s.train));
    s.val = data::to_grayscale(std::move(s.val));
    s.test = data::to_grayscale(std::move(s.test));
  }
  return s;
}

/// Test accuracy split by environment id.
template <class Model>
std::map<int, double> accuracy_by_env(const Model& model, const data::Dataset& ds) {
  std::map<int, data::Dataset> parts;
  for (const auto& ex : ds) parts[ex.env].push_back(ex);
  std::map<int, double> out;
  for (const auto& [env, part] : parts) out[env] = nn::accuracy(model, part);
  return out;
}

// ---- ERM --------------------------------------------------------------------------

struct ErmResult {
  nn::Classifier model;
  std::vector<nn::ErmEpoch> history;
};

/// Pooled cross-entropy SGD with the DecAug backbone family and a linear head.
inline ErmResult erm_train(const nn::BackboneSpec& spec, const data::Splits& splits, const nn::SgdOptions& opt,
                           std::uint64_t seed, const std::function<void(const nn::ErmEpoch&)>& on_epoch = {}) {
  ErmResult r;
  r.model = nn::make_classifier(spec, n_classes(splits), seed);
  r.history = nn::train_ce(r.model, r.model.params(), splits, opt, seed, "erm.train", on_epoch);
  return r;
}

// ---- report -------------------------------------------------------------------------

struct RunReport {
  nlohmann::json config;
  nlohmann::json dataset;  // signature used by compare
  Table metrics;
  std::optional<double> test_acc;         // final, all test environments pooled
  std::map<int, double> test_acc_by_env;  // final, per test environment
  nlohmann::json summary = nlohmann::json::object();
  double wall_clock_s = 0;
  std::map<std::string, std::string> artifacts;  // name -> path relative to the run directory

  std::string task() const { return config.at("task").get<std::string>(); }
  std::string method() const { return config.at("method").get<std::string>(); }
  std::uint64_t seed() const { return config.at("seed").get<std::uint64_t>(); }
};

inline nlohmann::json to_json(const RunReport& r) {
  nlohmann::json j;
  j["config"] = r.config;
  j["dataset"] = r.dataset;
  j["metrics_header"] = r.metrics.header;
  j["metrics"] = r.metrics.to_json();
  j["final"]["test_acc"] = r.test_acc ? nlohmann::json(*r.test_acc) : nlohmann::json(nullptr);
  nlohmann::json by_env = nlohmann::json::object();
  for (const auto& [env, acc] : r.test_acc_by_env) by_env[std::to_string(env)] = acc;
  j["final"]["test_acc_by_env"] = by_env;
  j["summary"] = r.summary;
  j["wall_clock_s"] = r.wall_clock_s;
  j["artifacts"] = r.artifacts;
  return j;
}

inline RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  try {
    r.config = j.at("config");
    r.dataset = j.at("dataset");
    r.metrics.header = j.at("metrics_header").get<std::vector<std::string>>();
    for (const auto& row : j.at("metrics")) {
      std::vector<double> v;
      for (const auto& h : r.metrics.header) v.push_back(row.at(h).get<double>());
      r.metrics.rows.push_back(v);
    }
    const auto& fin = j.at("final");
    if (!fin.at("test_acc").is_null()) r.test_acc = fin.at("test_acc").get<double>();
    for (const auto& [env, acc] : fin.at("test_acc_by_env").items()) r.test_acc_by_env[std::stoi(env)] = acc;
    r.summary = j.value("summary", nlohmann::json::object());
    r.wall_clock_s = j.value("wall_clock_s", 0.0);
    r.artifacts = j.value("artifacts", std::map<std::string, std::string>{});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report.json: ") + e.what());
  }
  return r;
}

/// Reads `report.json` from a run directory (or the file itself).
inline RunReport load_report(const std::filesystem::path& p) {
  const auto file = std::filesystem::is_directory(p) ? p / "report.json" : p;
  try {
    return report_from_json(nlohmann::json::parse(bytes::slurp(file)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

// ---- task runners -------------------------------------------------------------------

namespace detail {

struct RunContext {
  const ExperimentConfig& cfg;
  std::filesystem::path dir;
  RunReport& report;
  std::uint64_t seed;

  std::filesystem::path add(const std::string& name, const std::string& file) {
    report.artifacts[name] = file;
    return dir / file;
  }
};

inline nn::BackboneSpec backbone_for(const ExperimentConfig& c, const data::Splits& s) {
  nn::BackboneSpec spec;
  spec.kind = c.backbone_kind();
  spec.sample_shape = s.train.at(0).x.shape();
  return spec;
}

inline void run_erm(RunContext& ctx) {
  const auto splits = make_splits(ctx.cfg);
  const auto spec = backbone_for(ctx.cfg, splits);
  auto r = erm_train(spec, splits, ctx.cfg.erm_options(), ctx.seed);
  ctx.report.metrics = erm_table(r.history);
  ctx.report.test_acc = nn::accuracy(r.model, splits.test);
  ctx.report.test_acc_by_env = accuracy_by_env(r.model, splits.test);
  ctx.report.summary["backbone"] = nn::to_string(spec.kind);
  ctx.report.summary["n_params"] = nn::count_params(r.model.params());
  if (ctx.cfg.checkpoints) {
    std::filesystem::create_directories(ctx.dir / "checkpoints");
    nn::save_checkpoint(ctx.add("checkpoint", "checkpoints/final.ckpt"), r.model.groups(),
                        {{"model", "erm"},
                         {"backbone", nn::to_string(spec.kind)},
                         {"sample_shape", spec.sample_shape},
                         {"n_classes", n_classes(splits)},
                         {"seed", ctx.seed},
                         {"epoch", r.history.size()}});
  }
}

inline void run_decaug(RunContext& ctx) {
  const auto splits = make_splits(ctx.cfg);
  const auto spec = backbone_for(ctx.cfg, splits);
  const auto hp = ctx.cfg.decaug_hyper();
  const std::size_t k = n_classes(splits), nc = n_contexts(splits.train);
  auto net = decaug::make_net(spec, k, nc, ctx.seed);
  const auto history = decaug::train(net, splits, hp, ctx.seed);
  ctx.report.metrics = decaug_table(history);
  auto model = [&](const Tensor& x) { return decaug::predict(net, x, hp.use_concat); };
  ctx.report.test_acc = nn::accuracy(model, splits.test);
  ctx.report.test_acc_by_env = accuracy_by_env(model, splits.test);
  ctx.report.summary["backbone"] = nn::to_string(spec.kind);
  ctx.report.summary["n_contexts"] = nc;
  if (!history.empty()) ctx.report.summary["final_Lorth"] = history.back().Lorth;
  if (ctx.cfg.checkpoints) {
    std::filesystem::create_directories(ctx.dir / "checkpoints");
    decaug::save(ctx.add("checkpoint", "checkpoints/final.ckpt"), net, hp, ctx.seed, history.size());
  }

  if (ctx.cfg.lambda_orth_sweep.empty()) return;
  Table sweep{{"lambda_orth", "L1", "L2", "Lorth", "Lconcat", "train_acc", "val_acc", "test_acc"}, {}};
  for (double l : ctx.cfg.lambda_orth_sweep) {
    auto h = hp;
    h.lambda_orth = l;
    auto n = decaug::make_net(spec, k, nc, ctx.seed);
    const auto hist = decaug::train(n, splits, h, ctx.seed);
    const decaug::EpochMetrics last = hist.empty() ? decaug::EpochMetrics{} : hist.back();
    sweep.rows.push_back({l, last.L1, last.L2, last.Lorth, last.Lconcat, last.train_acc, last.val_acc,
                          decaug::evaluate(n, splits.test, h.use_concat)});
  }
  write_table(ctx.add("sweep", "sweep.csv"), sweep);
  ctx.report.summary["sweep"] = sweep.to_json();
  // Trend of test accuracy and of the final Lorth as lambda_orth grows.
  auto order = sweep.rows;
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a[0] < b[0]; });
  bool acc_up = true, orth_down = true;
  for (std::size_t i = 1; i < order.size(); ++i) {
    acc_up = acc_up && order[i][7] >= order[i - 1][7];
    orth_down = orth_down && order[i][3] <= order[i - 1][3];
  }
  ctx.report.summary["sweep_trend"] = {{"test_acc_nondecreasing", acc_up}, {"Lorth_nonincreasing", orth_down}};
}

inline nlohmann::json arch_weights_json(const nas::ArchParams& a) {
  nlohmann::json j;
  for (bool r : {false, true}) {
    const Array& logits = a.cell(r).value();
    const Array w = nas::relax(a.cell(r)).value();
    nlohmann::json lj = nlohmann::json::array(), wj = nlohmann::json::array();
    for (std::size_t e = 0; e < logits.dim(0); ++e) {
      std::vector<double> lrow, wrow;
      for (std::size_t k = 0; k < nas::kNumOps; ++k)
        lrow.push_back(logits.at(e, k)), wrow.push_back(w.at(e, k));
      lj.push_back(lrow);
      wj.push_back(wrow);
    }
    const std::string cell = r ? "reduce" : "normal";
    j[cell]["logits"] = lj;
    j[cell]["weights"] = wj;
  }
  j["ops"] = nas::kOpNames;
  return j;
}

inline void run_nas(RunContext& ctx) {
  const auto splits = make_splits(ctx.cfg);
  const auto o = ctx.cfg.search_options();
  const auto res = nas::search(splits, o, ctx.seed);
  ctx.report.metrics = search_table(res.history);
  write_json(ctx.add("arch", "arch.json"), nas::to_json(res.arch));
  write_json(ctx.add("alpha", "alpha.json"), arch_weights_json(res.alpha));
  nlohmann::json per_epoch = nlohmann::json::array();
  for (const auto& a : res.arch_per_epoch) per_epoch.push_back(nas::to_json(a));
  write_json(ctx.add("arch_per_epoch", "arch_per_epoch.json"), per_epoch);

  auto& sum = ctx.report.summary;
  sum["arch"] = nas::to_json(res.arch);
  sum["supernet_params"] = res.supernet_params;
  const auto searched_pct = nas::op_stats({res.arch});
  sum["op_pct"] = searched_pct;
  if (!res.history.empty()) ctx.report.test_acc = res.history.back().test_acc;

  if (ctx.cfg.retrain.epochs > 0) {
    auto r = nas::retrain(res.arch, splits, o.cell, ctx.cfg.retrain, ctx.seed);
    write_table(ctx.add("retrain", "retrain.csv"), erm_table(r.history));
    auto model = [&](const Tensor& x) { return r.net.forward(x, res.arch); };
    ctx.report.test_acc = r.test_acc;
    ctx.report.test_acc_by_env = accuracy_by_env(model, splits.test);
    sum["retrain"] = {{"test_acc", r.test_acc}, {"val_acc", r.val_acc}, {"n_params", r.n_params}};
    if (ctx.cfg.checkpoints) {
      std::filesystem::create_directories(ctx.dir / "checkpoints");
      nn::save_checkpoint(ctx.add("checkpoint", "checkpoints/final.ckpt"), {{"network", r.net.params(res.arch)}},
                          {{"model", "nasood"}, {"arch", nas::to_json(res.arch)}, {"seed", ctx.seed}});
    }
  }

  if (ctx.cfg.random_archs == 0) return;
  Rng rng(ctx.seed, "random_archs");
  Table rt{{"index", "test_acc", "val_acc", "n_params"}, {}};
  for (const char* n : nas::kOpNames) rt.header.push_back(std::string("pct_") + n);
  std::vector<nas::DiscreteArch> randoms;
  nlohmann::json rj = nlohmann::json::array();
  double mean = 0;
  for (std::size_t i = 0; i < ctx.cfg.random_archs; ++i) {
    randoms.push_back(nas::random_arch(o.cell, rng));
    const auto r = nas::retrain(randoms.back(), splits, o.cell, ctx.cfg.retrain, ctx.seed);
    std::vector<double> row{static_cast<double>(i), r.test_acc, r.val_acc, static_cast<double>(r.n_params)};
    const auto pct = nas::op_stats({randoms.back()});
    row.insert(row.end(), pct.begin(), pct.end());
    rt.rows.push_back(row);
    rj.push_back(nas::to_json(randoms.back()));
    mean += r.test_acc / static_cast<double>(ctx.cfg.random_archs);
  }
  write_table(ctx.add("random", "random.csv"), rt);
  write_json(ctx.add("random_archs", "random_archs.json"), rj);
  const auto random_pct = nas::op_stats(randoms);
  sum["random"] = {{"mean_test_acc", mean}, {"op_pct", random_pct}};
  sum["dil_conv_pct"] = {{"searched", searched_pct[nas::kDilConv]}, {"random", random_pct[nas::kDilConv]}};
}

inline Table minimize_runs(RunContext& ctx, double lambda_orth) {
  Rng rng(ctx.seed, "sem_inits");
  auto opt = ctx.cfg.minimize;
  opt.lambda_orth = lambda_orth;
  Table t{{"init", "step", "a11", "a21", "a12", "a22", "Ly2", "L2", "Lorth"}, {}};
  nlohmann::json finals = nlohmann::json::array();
  for (std::size_t i = 0; i < ctx.cfg.sem_inits; ++i) {
    sem::SemConfig init{ctx.cfg.sigma, rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto res = sem::minimize_joint(init, opt, rng.below(std::uint64_t{1} << 62));
    for (const auto& row : res.trajectory)
      t.rows.push_back({static_cast<double>(i), static_cast<double>(row.step), row.cfg.a11, row.cfg.a21, row.cfg.a12,
                        row.cfg.a22, row.Ly2, row.L2, row.Lorth});
    finals.push_back({{"a11", res.final.a11}, {"a21", res.final.a21}, {"a12", res.final.a12}, {"a22", res.final.a22}});
  }
  ctx.report.summary["lambda_orth"] = lambda_orth;
  ctx.report.summary["final"] = finals;
  return t;
}

inline void run_sem(RunContext& ctx) {
  const bool decaug = ctx.cfg.resolved_method() == Method::kDecAug;
  ctx.report.metrics = minimize_runs(ctx, decaug ? ctx.cfg.minimize.lambda_orth : 0.0);
}

inline void run_sem_verify(RunContext& ctx) {
  Rng rng(ctx.seed, "sem_verify");
  const double sigmas[] = {0.25, 0.5, 1.0, 2.0};
  Table t{{"config", "sigma", "a11", "a21", "a12", "a22", "L2_closed", "L2_mc", "L2_rel_err", "Lorth_closed",
           "Lorth_mc", "Lorth_rel_err"},
          {}};
  double worst = 0;
  for (std::size_t i = 0; i < ctx.cfg.mc_configs; ++i) {
    const sem::SemConfig cfg{sigmas[i % 4], rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                             rng.uniform(-1, 1)};
    const auto mc = sem::mc_estimate(cfg, ctx.cfg.mc_n, rng.below(std::uint64_t{1} << 62));
    const double l2 = sem::expected_L2_closed(cfg), lo = sem::expected_Lorth_closed(cfg);
    const double e2 = std::abs(mc.L2 - l2) / l2, eo = std::abs(mc.Lorth - lo) / lo;
    worst = std::max({worst, e2, eo});
    t.rows.push_back({static_cast<double>(i), cfg.sigma, cfg.a11, cfg.a21, cfg.a12, cfg.a22, l2, mc.L2, e2, lo,
                      mc.Lorth, eo});
  }
  write_table(ctx.add("closed_vs_mc", "closed_vs_mc.csv"), t);
  ctx.report.summary["closed_vs_mc"] = t.to_json();
  ctx.report.summary["max_rel_err"] = worst;
  ctx.report.metrics = minimize_runs(ctx, ctx.cfg.minimize.lambda_orth);
}

}  // namespace detail

/// Runs one experiment and writes its directory. Invalid configs raise
/// ConfigError naming the field; training failures raise DivergenceError
/// naming the stage.
inline RunReport run(const ExperimentConfig& cfg) {
  validate(cfg);
  const auto start = std::chrono::steady_clock::now();
  const auto dir = cfg.output_dir();
  std::filesystem::create_directories(dir);

  RunReport report;
  report.config = to_json(cfg);
  report.dataset = dataset_signature(cfg);
  detail::RunContext ctx{cfg, dir, report, cfg.require_seed()};
  write_json(ctx.add("config", "config.json"), report.config);

  switch (cfg.task) {
    case Task::kColored:
    case Task::kRotated:
      if (cfg.resolved_method() == Method::kErm)
        detail::run_erm(ctx);
      else
        detail::run_decaug(ctx);
      break;
    case Task::kNasSearch:
      detail::run_nas(ctx);
      break;
    case Task::kSem:
      detail::run_sem(ctx);
      break;
    case Task::kSemVerify:
      detail::run_sem_verify(ctx);
      break;
  }
  write_table(ctx.add("metrics", "metrics.csv"), report.metrics);
  report.artifacts["report"] = "report.json";
  report.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(dir / "report.json", to_json(report));
  return report;
}

}  // namespace oodkit::harness
