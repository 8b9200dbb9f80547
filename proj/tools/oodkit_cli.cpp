// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// oodkit command-line tool.
//
// Config precedence, lowest to highest: built-in defaults, --config file,
// named flags (--seed, --epochs, --lambda-orth, ...), then --set key=value in
// the order given. OODKIT_OUT sets the default output root.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oodkit/core/bytes.hpp"
#include "oodkit/data/export.hpp"
#include "oodkit/data/sem_data.hpp"
#include "oodkit/harness/compare.hpp"
#include "oodkit/harness/run.hpp"

namespace {

using namespace oodkit;
using nlohmann::json;

// Named flags are thin aliases for config keys: --lambda-orth=0.01 is the
// same as --set lambda_orth=0.01.
const std::vector<std::string> kCommonKeys = {"seed",         "out",       "method",     "epochs",   "lr",
                                              "batch",        "momentum",  "n_per_env",  "backbone", "val_fraction",
                                              "idx_images",   "idx_labels", "checkpoints"};
const std::vector<std::string> kDecAugKeys = {"eps",        "lambda1",  "lambda2",          "lambda_orth",
                                              "orth_grad",  "use_concat", "lambda_orth_sweep"};
const std::vector<std::string> kSearchKeys = {"search_data",     "n_nodes",        "channels",     "gen_channels",
                                              "lambda_cycle",    "lambda_ce",      "lr_omega",     "lr_alpha",
                                              "lr_gen",          "pretrain_epochs", "pretrain_lr", "retrain_epochs",
                                              "retrain_lr",      "retrain_batch",  "retrain_momentum", "random_archs"};
const std::vector<std::string> kSemKeys = {"sigma",    "mc_n",      "mc_configs",      "sem_steps", "sem_lr",
                                           "sem_batch", "sem_inits", "sem_lambda_orth", "orth_into_context"};

std::string flag_name(std::string key) {
  for (auto& ch : key)
    if (ch == '_') ch = '-';
  return "--" + key;
}

struct ConfigFlags {
  std::string config_path;
  std::string task;
  bool grayscale = false;
  std::vector<std::string> sets;
  std::map<std::string, std::string> named;

  void add(CLI::App* app, const std::vector<std::vector<std::string>>& groups, bool with_task) {
    app->add_option("--config", config_path, "JSON config file")->check(CLI::ExistingFile);
    if (with_task) app->add_option("--task", task, "colored | rotated | sem");
    app->add_flag("--grayscale", grayscale, "zero the color channel (colored task)");
    app->add_option("--set", sets, "override any config key: key=value (repeatable)");
    for (const auto& keys : groups)
      for (const auto& k : keys) app->add_option(flag_name(k), named[k], "config key " + k);
  }

  harness::ExperimentConfig build(const std::string& fixed_task) const {
    json j = json::object();
    if (!config_path.empty()) {
      try {
        j = json::parse(bytes::slurp(config_path));
      } catch (const json::parse_error& e) {
        throw ConfigError("config", config_path + ": " + e.what());
      }
    }
    if (!fixed_task.empty()) {
      if (j.contains("task") && j["task"] != fixed_task)
        throw ConfigError("task", "this subcommand runs '" + fixed_task + "'");
      j["task"] = fixed_task;
    }
    if (!task.empty()) j["task"] = task;
    if (grayscale) j["grayscale"] = true;
    for (const auto& [key, value] : named) {
      if (value.empty()) continue;
      // Comma lists are accepted for the sweep: 0,0.01,0.1.
      const bool list = key == "lambda_orth_sweep" && value.front() != '[';
      harness::apply_override(j, key + "=" + (list ? "[" + value + "]" : value));
    }
    for (const auto& s : sets) harness::apply_override(j, s);
    return harness::config_from_json(j);
  }
};

void print_summary(const harness::RunReport& r, const std::filesystem::path& dir) {
  std::cout << "run: " << r.task() << " " << r.method() << " seed " << r.seed() << "\n";
  std::cout << "dir: " << dir.string() << "\n";
  if (r.test_acc) std::cout << "test_acc: " << format_number(*r.test_acc) << "\n";
  for (const auto& [env, acc] : r.test_acc_by_env)
    std::cout << "test_acc[env " << env << "]: " << format_number(acc) << "\n";
  if (r.summary.contains("max_rel_err"))
    std::cout << "max_rel_err: " << format_number(r.summary["max_rel_err"].get<double>()) << "\n";
  std::cout << "wall_clock_s: " << format_number(r.wall_clock_s) << "\n";
}

int run_config(const harness::ExperimentConfig& cfg) {
  const auto report = harness::run(cfg);
  print_summary(report, cfg.output_dir());
  return 0;
}

int gen_data(const std::string& task, std::uint64_t seed, std::size_t n, double sigma, bool grayscale,
             const std::filesystem::path& out) {
  if (task == "sem") {
    std::filesystem::create_directories(out);
    auto os = open_for_write((out / "sem.csv").string());
    CsvWriter w(os);
    w.row({"x1", "x2", "y", "c"});
    for (const auto& s : data::sem_sample(sigma, n, seed))
      w.row({format_number(s.x1), format_number(s.x2), format_number(s.y), format_number(s.c)});
    std::cout << "wrote " << n << " samples to " << (out / "sem.csv").string() << "\n";
    return 0;
  }
  harness::ExperimentConfig c;
  c.task = harness::task_from_string(task);
  if (c.task != harness::Task::kColored && c.task != harness::Task::kRotated)
    throw ConfigError("task", "gen-data supports colored, rotated, sem");
  c.seed = seed;
  c.n_per_env = n;
  const auto train_envs = c.resolved_train_envs(), test_envs = c.resolved_test_envs();
  auto gen = [&](const std::vector<data::EnvSpec>& envs) {
    auto ds = c.task == harness::Task::kColored ? data::gen_colored(envs, seed) : data::gen_rotated(envs, seed);
    return grayscale ? data::to_grayscale(std::move(ds)) : ds;
  };
  data::write_dataset(out / "train", gen(train_envs), {task, seed, train_envs});
  data::write_dataset(out / "test", gen(test_envs), {task, seed, test_envs});
  std::cout << "wrote " << (out / "train").string() << " and " << (out / "test").string() << "\n";
  return 0;
}

// Architectures from arch.json files, arrays of them, or run directories.
std::vector<nas::DiscreteArch> load_archs(const std::filesystem::path& p, const nas::CellSpec& cell) {
  std::vector<nas::DiscreteArch> out;
  auto from_file = [&](const std::filesystem::path& f) {
    json j;
    try {
      j = json::parse(bytes::slurp(f));
    } catch (const json::parse_error& e) {
      throw FormatError(f.string() + ": " + e.what());
    }
    if (j.is_array())
      for (const auto& a : j) out.push_back(nas::arch_from_json(a, cell));
    else
      out.push_back(nas::arch_from_json(j, cell));
  };
  if (std::filesystem::is_directory(p))
    from_file(p / "arch.json");
  else
    from_file(p);
  return out;
}

int op_stats(const std::vector<std::string>& inputs, std::size_t n_nodes) {
  nas::CellSpec cell;
  cell.n_nodes = n_nodes;
  CsvWriter w(std::cout);
  std::vector<std::string> header{"source", "n_archs"};
  for (const char* n : nas::kOpNames) header.push_back(std::string("pct_") + n);
  w.row(header);
  std::vector<nas::DiscreteArch> all;
  auto emit = [&](const std::string& name, const std::vector<nas::DiscreteArch>& archs) {
    std::vector<std::string> row{name, format_number(archs.size())};
    for (double v : nas::op_stats(archs)) row.push_back(format_number(v));
    w.row(row);
  };
  for (const auto& in : inputs) {
    const auto archs = load_archs(in, cell);
    emit(in, archs);
    all.insert(all.end(), archs.begin(), archs.end());
  }
  if (inputs.size() > 1) emit("all", all);
  return 0;
}

int compare_runs(const std::vector<std::string>& dirs, const std::string& format, const std::string& out) {
  std::vector<harness::RunReport> reports;
  for (const auto& d : dirs) reports.push_back(harness::load_report(d));
  const auto rows = harness::compare(reports);
  auto write = [&](std::ostream& os) {
    if (format == "md")
      harness::write_compare_markdown(os, rows);
    else
      harness::write_compare_csv(os, rows);
  };
  if (out.empty()) {
    write(std::cout);
  } else {
    auto os = open_for_write(out);
    write(os);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oodkit: out-of-distribution generalization experiments"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
  std::string gen_task = "colored", gen_out = "data";
  std::uint64_t gen_seed = 0;
  std::size_t gen_n = 5000;
  double gen_sigma = 1.0;
  bool gen_gray = false;
  gen->add_option("--task", gen_task, "colored | rotated | sem")->capture_default_str();
  gen->add_option("--seed", gen_seed, "seed")->required();
  gen->add_option("--out", gen_out, "output directory")->capture_default_str();
  gen->add_option("--n-per-env", gen_n, "examples per environment (sem: samples)")->capture_default_str();
  gen->add_option("--sigma", gen_sigma, "noise scale (sem)")->capture_default_str();
  gen->add_flag("--grayscale", gen_gray, "zero the color channel");

  ConfigFlags train_flags, search_flags, sem_flags;
  auto* train = app.add_subcommand("train", "train ERM or DecAug on colored/rotated, or minimize the SEM objective");
  train_flags.add(train, {kCommonKeys, kDecAugKeys, kSemKeys}, true);
  auto* search = app.add_subcommand("search", "architecture search, retrain, and random-architecture baseline");
  search_flags.add(search, {kCommonKeys, kSearchKeys}, false);
  auto* semv = app.add_subcommand("sem-verify", "closed-form vs Monte Carlo losses and joint minimization");
  sem_flags.add(semv, {kCommonKeys, kSemKeys}, false);

  auto* cmp = app.add_subcommand("compare", "mean and std of final test accuracy per method");
  std::vector<std::string> cmp_dirs;
  std::string cmp_format = "csv", cmp_out;
  cmp->add_option("runs", cmp_dirs, "run directories or report.json files")->required();
  cmp->add_option("--format", cmp_format, "csv | md")->check(CLI::IsMember({"csv", "md"}))->capture_default_str();
  cmp->add_option("--out", cmp_out, "write to a file instead of stdout");

  auto* ops = app.add_subcommand("op-stats", "operation percentages of architectures");
  std::vector<std::string> op_inputs;
  std::size_t op_nodes = 4;
  ops->add_option("archs", op_inputs, "arch JSON files (single or array) or search run directories")->required();
  ops->add_option("--n-nodes", op_nodes, "intermediate nodes per cell")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) return gen_data(gen_task, gen_seed, gen_n, gen_sigma, gen_gray, gen_out);
    if (*train) return run_config(train_flags.build(""));
    if (*search) return run_config(search_flags.build("nas-search"));
    if (*semv) return run_config(sem_flags.build("sem-verify"));
    if (*cmp) return compare_runs(cmp_dirs, cmp_format, cmp_out);
    if (*ops) return op_stats(op_inputs, op_nodes);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
