// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: evaluates the eight release criteria and prints one
// PASS/FAIL line for each. The exit status is non-zero when the set of failing
// criteria differs from --expect-fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oodkit/core/bytes.hpp"
#include "oodkit/harness/compare.hpp"
#include "oodkit/harness/run.hpp"
#include "oodkit/sem/semverify.hpp"
#include "support/gradient_cases.hpp"
#include "support/nas_states.hpp"
#include "support/sem_oracles.hpp"

namespace {

using namespace oodkit;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Context {
  fs::path out;
  std::map<std::string, harness::RunReport> cache;  // by run directory name

  harness::RunReport run(const std::string& name, harness::ExperimentConfig cfg) {
    if (auto it = cache.find(name); it != cache.end()) return it->second;
    cfg.out = (out / name).string();
    return cache[name] = harness::run(cfg);
  }
};

harness::ExperimentConfig config(const std::string& task, const std::string& method, std::uint64_t seed) {
  nlohmann::json j = {{"task", task}, {"seed", seed}};
  if (!method.empty()) j["method"] = method;
  return harness::config_from_json(j);
}

// ---- 1: SEM closed forms against Monte Carlo, and the joint minimizer ---------------

Outcome sem_oracle(Context&) {
  const auto t0 = Clock::now();
  Rng rng(2026, "acceptance_sem_configs");
  const double sigmas[] = {0.25, 0.5, 1.0, 2.0};
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    const sem::SemConfig cfg{sigmas[i % 4], rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1),
                             rng.uniform(-1, 1)};
    const auto mc = sem::mc_estimate(cfg, 1000000, static_cast<std::uint64_t>(i));
    const double l2 = sem::expected_L2_closed(cfg), lo = sem::expected_Lorth_closed(cfg);
    worst = std::max({worst, std::abs(mc.L2 - l2) / l2, std::abs(mc.Lorth - lo) / lo});
  }
  const double mc_time = seconds_since(t0);

  // Every grid point minimizing both E[L2] and E[Lorth] has a21 = a12 = 0, a22 = 1.
  const auto both_min = oodkit::testing::both_minimal_grid_points(1.0);
  bool grid_ok = !both_min.empty();
  for (const auto& p : both_min) grid_ok = grid_ok && p[1] == 0.0 && p[2] == 0.0 && p[3] == 1.0;

  Rng init_rng(2026, "acceptance_sem_inits");
  double worst_coef = 0, worst_dist = 0;
  for (int k = 0; k < 5; ++k) {
    const sem::SemConfig init{1.0, init_rng.uniform(-1, 1), init_rng.uniform(-1, 1), init_rng.uniform(-1, 1),
                              init_rng.uniform(-1, 1)};
    const auto f = sem::minimize_joint(init, {}, static_cast<std::uint64_t>(k)).final;
    worst_coef = std::max({worst_coef, std::abs(f.a21), std::abs(f.a12), std::abs(f.a22 - 1.0)});
    worst_dist = std::max(worst_dist, oodkit::testing::distance_to_set({f.a11, f.a21, f.a12, f.a22}, both_min));
  }
  const bool pass = worst < 0.01 && mc_time < 30.0 && worst_coef < 0.05 && grid_ok && worst_dist < 0.05;
  return {pass, "max MC rel err " + fmt(worst) + " (10 configs, n=1e6, " + fmt(mc_time, 3) +
                    " s); minimizer max |a21|,|a12|,|a22-1| = " + fmt(worst_coef) + " over 5 inits; grid oracle " +
                    (grid_ok ? "confirms" : "disagrees") + ", distance " + fmt(worst_dist)};
}

// ---- 2: finite-difference gradient checks -------------------------------------------

Outcome gradients(Context&) {
  const auto t0 = Clock::now();
  constexpr int kInstances = 20;
  std::vector<oodkit::testing::FdResult> all;
  for (const auto& part :
       {oodkit::testing::unary_op_checks(kInstances), oodkit::testing::multi_input_op_checks(kInstances),
        oodkit::testing::second_order_checks(kInstances), oodkit::testing::decaug_total_loss_checks(kInstances),
        oodkit::testing::decaug_orth_checks(kInstances), oodkit::testing::aux_loss_checks(kInstances)})
    all.insert(all.end(), part.begin(), part.end());
  std::map<std::string, int> count;
  double worst = 0;
  std::string worst_case;
  for (const auto& r : all) {
    ++count[r.name];
    if (!(r.err <= worst)) worst = r.err, worst_case = r.name + "#" + std::to_string(r.instance);
  }
  int min_instances = kInstances;
  for (const auto& [name, n] : count) min_instances = std::min(min_instances, n);
  const double t = seconds_since(t0);
  const bool pass = worst < 1e-4 && min_instances >= 20 && t < 120.0;
  return {pass, std::to_string(count.size()) + " cases x " + std::to_string(min_instances) +
                    " instances, max rel err " + fmt(worst) + " (" + worst_case + "), " + fmt(t, 3) + " s"};
}

// ---- 3: correlation shift on the colored task -----------------------------------------

Outcome correlation_shift(Context& ctx) {
  const auto t0 = Clock::now();
  std::vector<harness::RunReport> reports;
  for (std::uint64_t seed : {0, 1, 2})
    for (const char* method : {"erm", "decaug"})
      reports.push_back(ctx.run(std::string("colored-") + method + "-s" + std::to_string(seed),
                                config("colored", method, seed)));
  const auto rows = harness::compare(reports);
  const auto& erm = rows[0].method == "erm" ? rows[0] : rows[1];
  const auto& dec = rows[0].method == "erm" ? rows[1] : rows[0];
  const double t = seconds_since(t0);
  std::string per_seed;
  for (std::size_t i = 0; i < 3; ++i)
    per_seed += (i ? ", " : "") + fmt(erm.values[i], 3) + "/" + fmt(dec.values[i], 3);
  const bool pass = erm.mean < 0.5 && dec.mean >= 0.65 && dec.mean >= erm.mean + 0.20 && t < 600.0;
  return {pass, "ERM " + fmt(erm.mean, 3) + " +- " + fmt(erm.std, 2) + ", DecAug " + fmt(dec.mean, 3) + " +- " +
                    fmt(dec.std, 2) + " (per seed ERM/DecAug: " + per_seed + "), " + fmt(t, 3) + " s"};
}

// ---- 4: orthogonality penalty on and off -------------------------------------------

Outcome disentanglement(Context& ctx) {
  auto with = config("colored", "decaug", 0);
  with.decaug.lambda_orth = 1e-2;
  auto without = with;
  without.decaug.lambda_orth = 0.0;
  const double on = ctx.run("colored-decaug-s0", with).summary.at("final_Lorth").get<double>();
  const double off = ctx.run("colored-decaug-orth0-s0", without).summary.at("final_Lorth").get<double>();
  return {on < 0.05 && off > 0.2, "final batch-mean Lorth: lambda_orth=1e-2 -> " + fmt(on) + ", lambda_orth=0 -> " +
                                      fmt(off)};
}

// ---- 5: searched architecture against random architectures ---------------------------

Outcome search_vs_random(Context&) {
  const auto t0 = Clock::now();
  const auto base = config("nas-search", "", 0);
  const auto o = base.search_options();
  Rng rng(0, "random_archs");
  std::vector<nas::DiscreteArch> randoms;
  for (int i = 0; i < 8; ++i) randoms.push_back(nas::random_arch(o.cell, rng));

  double searched_mean = 0, random_mean = 0;
  std::string per_seed;
  for (std::uint64_t seed : {0, 1, 2}) {
    auto cfg = base;
    cfg.seed = seed;
    const auto splits = harness::make_splits(cfg);
    const auto found = nas::search(splits, o, seed);
    const double s = nas::retrain(found.arch, splits, o.cell, cfg.retrain, seed).test_acc;
    double r = 0;
    for (const auto& d : randoms) r += nas::retrain(d, splits, o.cell, cfg.retrain, seed).test_acc / 8.0;
    searched_mean += s / 3.0;
    random_mean += r / 3.0;
    per_seed += (seed ? ", " : "") + fmt(s, 3) + "/" + fmt(r, 3);
  }
  const double t = seconds_since(t0);
  return {searched_mean >= random_mean && t < 1800.0,
          "rotated task: searched " + fmt(searched_mean, 4) + " vs random mean " + fmt(random_mean, 4) +
              " (per seed searched/random: " + per_seed + "), " + fmt(t, 3) + " s"};
}

// ---- 6: minimax step directions ------------------------------------------------------

Outcome minimax_directions(Context&) {
  int ascent_bad = 0, descent_bad = 0, checks = 0;
  double worst_ascent = 0, worst_descent = 0;
  for (double lr : {1e-3, 1e-4}) {
    for (std::uint64_t s = 0; s < 50; ++s) {
      const auto p = oodkit::testing::random_problem(1000 + s);
      const auto up = oodkit::testing::generator_ascent(p, lr);
      const auto down = oodkit::testing::alpha_descent(p, lr);
      ascent_bad += up.after < up.before;
      descent_bad += down.after > down.before;
      worst_ascent = std::min(worst_ascent, up.after - up.before);
      worst_descent = std::max(worst_descent, down.after - down.before);
      ++checks;
    }
  }
  return {ascent_bad == 0 && descent_bad == 0,
          std::to_string(checks) + " states per step (lr 1e-3, 1e-4): generator ascent decreased l_val " +
              std::to_string(ascent_bad) + " times (worst change " + fmt(worst_ascent) +
              "), alpha descent increased it " + std::to_string(descent_bad) + " times (worst change " +
              fmt(worst_descent) + ")"};
}

// ---- 7: discretization and one-hot forward -------------------------------------------

Outcome structure(Context&) {
  int invalid = 0, not_simplex = 0;
  const double scales[] = {0.01, 1.0, 10.0, 100.0};
  for (int t = 0; t < 1000; ++t) {
    nas::CellSpec cell;
    cell.n_nodes = 2 + t % 4;
    const auto arch = nas::init_arch(cell, scales[t % 4], static_cast<std::uint64_t>(t));
    for (bool r : {false, true}) {
      const Array w = nas::relax(arch.cell(r)).value();
      for (std::size_t e = 0; e < cell.n_edges(); ++e) {
        double sum = 0;
        for (std::size_t k = 0; k < nas::kNumOps; ++k) {
          sum += w.at(e, k);
          not_simplex += w.at(e, k) < 0;
        }
        not_simplex += std::abs(sum - 1.0) > 1e-12;
      }
    }
    const auto d = nas::discretize(arch, cell);
    bool ok = nas::check(d, cell).empty();
    // Independent of check(): two distinct earlier sources per node, no zero op.
    for (bool r : {false, true}) {
      const auto& c = d.cell(r);
      ok = ok && c.size() == cell.n_nodes;
      for (std::size_t n = 0; n < c.size(); ++n) {
        ok = ok && c[n].size() == 2 && c[n][0].source != c[n][1].source;
        for (const auto& ch : c[n]) ok = ok && ch.source < n + 2 && ch.op != nas::kZero;
      }
    }
    invalid += !ok;
  }

  int mismatched = 0;
  for (std::size_t nodes : {2, 4}) {
    nas::CellSpec cell;
    cell.n_nodes = nodes;
    nas::Supernet net = nas::make_supernet(cell, 2, 2, nodes);
    Rng rng(nodes, "acceptance_one_hot");
    Array xa(Shape{3, 2, 8, 8});
    for (auto& v : xa.data()) v = rng.uniform();
    const Tensor x(xa);
    for (int t = 0; t < 20; ++t) {
      const auto d = nas::random_arch(cell, rng);
      const Array mixed = net.forward(x, Tensor(nas::one_hot_weights(d.normal, cell)),
                                      Tensor(nas::one_hot_weights(d.reduce, cell)))
                              .value();
      const Array discrete = net.forward(x, d).value();
      mismatched += !std::ranges::equal(mixed.data(), discrete.data());
    }
  }
  return {invalid == 0 && not_simplex == 0 && mismatched == 0,
          "1000 random ArchParams: " + std::to_string(invalid) + " invalid, " + std::to_string(not_simplex) +
              " non-simplex rows; one-hot vs discrete forward: " + std::to_string(mismatched) + "/40 differ"};
}

// ---- 8: determinism ------------------------------------------------------------------

Outcome determinism(Context& ctx) {
  std::vector<std::pair<std::string, harness::ExperimentConfig>> runs;
  auto small = [](harness::ExperimentConfig c) {
    c.n_per_env = 300;
    c.epochs = 3;
    return c;
  };
  runs.emplace_back("erm-colored", small(config("colored", "erm", 7)));
  auto dec = small(config("rotated", "decaug", 7));
  dec.lambda_orth_sweep = {0.0, 0.1};
  runs.emplace_back("decaug-rotated", dec);
  auto semc = config("sem", "decaug", 7);
  semc.minimize.steps = 200;
  semc.sem_inits = 2;
  runs.emplace_back("sem", semc);
  auto semv = config("sem-verify", "", 7);
  semv.mc_n = 50000;
  semv.minimize.steps = 200;
  semv.sem_inits = 2;
  runs.emplace_back("sem-verify", semv);
  auto nasc = config("nas-search", "", 7);
  nasc.n_per_env = 60;
  nasc.epochs = 2;
  nasc.search.pretrain_epochs = 2;
  nasc.retrain.epochs = 2;
  nasc.random_archs = 2;
  runs.emplace_back("nas-search", nasc);

  int files = 0;
  std::vector<std::string> differ;
  for (auto& [name, cfg] : runs) {
    const auto a = ctx.run("determinism/" + name + "-a", cfg);
    ctx.run("determinism/" + name + "-b", cfg);
    for (const auto& [artifact, path] : a.artifacts) {
      if (!path.ends_with(".csv")) continue;
      ++files;
      if (bytes::slurp(ctx.out / "determinism" / (name + "-a") / path) !=
          bytes::slurp(ctx.out / "determinism" / (name + "-b") / path))
        differ.push_back(name + "/" + path);
    }
  }
  std::string detail = std::to_string(runs.size()) + " run types, " + std::to_string(files) + " CSVs compared";
  for (const auto& d : differ) detail += "; differs: " + d;
  return {differ.empty() && files >= static_cast<int>(runs.size()), detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome(Context&)> fn;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oodkit acceptance criteria"};
  std::vector<int> only, expect_fail;
  std::string out = "acceptance_runs";
  app.add_option("--only", only, "run only these criteria (1-8)")->delimiter(',');
  app.add_option("--expect-fail", expect_fail, "criteria known to fail")->delimiter(',');
  app.add_option("--out", out, "directory for run outputs")->capture_default_str();
  CLI11_PARSE(app, argc, argv);

  const std::vector<Criterion> criteria = {
      {1, "SEM closed forms vs Monte Carlo; joint minimizer", sem_oracle},
      {2, "finite-difference gradient checks", gradients},
      {3, "correlation shift on colored task, ERM vs DecAug", correlation_shift},
      {4, "orthogonality penalty on vs off", disentanglement},
      {5, "searched vs random architectures", search_vs_random},
      {6, "minimax step directions", minimax_directions},
      {7, "discretization invariants; one-hot forward", structure},
      {8, "byte-identical reruns", determinism},
  };

  Context ctx;
  ctx.out = out;
  fs::remove_all(ctx.out);
  std::set<int> failed;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = c.fn(ctx);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    if (!o.pass) failed.insert(c.id);
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }

  int status = 0;
  for (int id : expect_fail) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    if (failed.erase(id)) {
      std::cout << "note: criterion " << id << " failed as expected\n";
    } else {
      std::cout << "note: criterion " << id << " was expected to fail but passed\n";
      status = 1;
    }
  }
  if (!failed.empty()) status = 1;
  return status;
}
