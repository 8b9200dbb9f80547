// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration. A config is a flat JSON object; every key below
// is optional except `task` and `seed`. Values are resolved in this order,
// later sources winning:
//
//   built-in defaults < config file (--config) < command-line flags
//
// `out` defaults to $OODKIT_OUT/<task>-<method>-s<seed> (or runs/... when the
// variable is unset). Unknown keys are rejected so that typos do not silently
// fall back to defaults.

#pragma once

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "oodkit/core/error.hpp"
#include "oodkit/data/dataset.hpp"
#include "oodkit/data/export.hpp"
#include "oodkit/decaug/decaug.hpp"
#include "oodkit/nas/nasood.hpp"
#include "oodkit/nn/backbone.hpp"
#include "oodkit/nn/classifier.hpp"
#include "oodkit/sem/semverify.hpp"

namespace oodkit::harness {

inline constexpr const char* kOutputRootEnv = "OODKIT_OUT";

enum class Task { kColored, kRotated, kSem, kNasSearch, kSemVerify };
enum class Method { kNone, kErm, kDecAug, kNasOod };

inline std::string to_string(Task t) {
  switch (t) {
    case Task::kColored:
      return "colored";
    case Task::kRotated:
      return "rotated";
    case Task::kSem:
      return "sem";
    case Task::kNasSearch:
      return "nas-search";
    case Task::kSemVerify:
      return "sem-verify";
  }
  return "?";
}

inline std::string to_string(Method m) {
  switch (m) {
    case Method::kNone:
      return "none";
    case Method::kErm:
      return "erm";
    case Method::kDecAug:
      return "decaug";
    case Method::kNasOod:
      return "nasood";
  }
  return "?";
}

inline Task task_from_string(const std::string& s) {
  for (Task t : {Task::kColored, Task::kRotated, Task::kSem, Task::kNasSearch, Task::kSemVerify})
    if (to_string(t) == s) return t;
  throw ConfigError("task", "unknown task '" + s + "' (colored, rotated, sem, nas-search, sem-verify)");
}

inline Method method_from_string(const std::string& s) {
  for (Method m : {Method::kNone, Method::kErm, Method::kDecAug, Method::kNasOod})
    if (to_string(m) == s) return m;
  throw ConfigError("method", "unknown method '" + s + "' (erm, decaug, nasood)");
}

struct ExperimentConfig {
  Task task = Task::kColored;
  std::optional<Method> method;
  std::optional<std::uint64_t> seed;
  std::string out;

  // Data. Empty env lists select the task's defaults.
  std::optional<std::size_t> n_per_env;
  double val_fraction = 0.1;
  bool grayscale = false;
  std::vector<data::EnvSpec> train_envs, test_envs;
  std::string idx_images, idx_labels;  // optional MNIST source for the colored task
  std::string search_data = "rotated";  // colored | rotated, for nas-search

  // Shared training knobs; defaults depend on the method.
  std::optional<std::size_t> epochs, batch;
  std::optional<double> lr;
  double momentum = 0.0;
  std::string backbone;  // mlp | conv; empty picks mlp for colored, conv for rotated

  // DecAug.
  decaug::DecAugHyper decaug;
  std::vector<double> lambda_orth_sweep;

  // NAS-OoD search and evaluation.
  nas::SearchOptions search;
  nn::SgdOptions retrain{0.05, 64, 10, 0.9};
  std::size_t random_archs = 0;

  // SEM.
  double sigma = 1.0;
  std::size_t mc_n = 1000000;
  std::size_t mc_configs = 10;
  sem::MinimizeOptions minimize;
  std::size_t sem_inits = 5;

  bool checkpoints = true;

  Method resolved_method() const {
    if (method) return *method;
    if (task == Task::kNasSearch) return Method::kNasOod;
    if (task == Task::kSemVerify) return Method::kNone;
    throw ConfigError("method", "required for task '" + to_string(task) + "'");
  }

  std::size_t resolved_n_per_env() const { return n_per_env.value_or(task == Task::kNasSearch ? 500 : 5000); }

  std::string data_task() const {
    if (task == Task::kNasSearch) return search_data;
    return to_string(task);
  }

  std::vector<data::EnvSpec> resolved_train_envs() const {
    if (!train_envs.empty()) return train_envs;
    const auto n = resolved_n_per_env();
    return data_task() == "colored" ? data::default_colored_train(n) : data::default_rotated_train(n);
  }
  std::vector<data::EnvSpec> resolved_test_envs() const {
    if (!test_envs.empty()) return test_envs;
    const auto n = resolved_n_per_env();
    return data_task() == "colored" ? data::default_colored_test(n) : data::default_rotated_test(n);
  }

  nn::BackboneKind backbone_kind() const {
    if (!backbone.empty()) return nn::backbone_from_string(backbone);
    return data_task() == "colored" ? nn::BackboneKind::kMlp : nn::BackboneKind::kConv;
  }

  decaug::DecAugHyper decaug_hyper() const {
    decaug::DecAugHyper h = decaug;
    h.epochs = epochs.value_or(h.epochs);
    h.batch = batch.value_or(h.batch);
    h.lr = lr.value_or(h.lr);
    return h;
  }

  nn::SgdOptions erm_options() const {
    return nn::SgdOptions{lr.value_or(0.1), batch.value_or(256), epochs.value_or(60), momentum};
  }

  nas::SearchOptions search_options() const {
    nas::SearchOptions o = search;
    o.epochs = epochs.value_or(o.epochs);
    o.batch = batch.value_or(o.batch);
    o.lr = lr.value_or(o.lr);
    return o;
  }

  std::uint64_t require_seed() const {
    if (!seed) throw ConfigError("seed", "required (runs are never unseeded)");
    return *seed;
  }

  std::filesystem::path output_dir() const {
    if (!out.empty()) return out;
    const char* root = std::getenv(kOutputRootEnv);
    return std::filesystem::path(root && *root ? root : "runs") /
           (to_string(task) + "-" + to_string(resolved_method()) + "-s" + std::to_string(require_seed()));
  }
};

namespace detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  try {
    if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
        throw ConfigError(key, "expected a non-negative integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError(key, "expected a number");
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(key, "expected true or false");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(key, "expected a string");
    }
    out = v.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(key, e.what());
  }
}

template <class T>
void read(const nlohmann::json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key)) return;
  T v{};
  read(j, key, v);
  out = v;
}

inline std::vector<data::EnvSpec> read_envs(const nlohmann::json& j, const char* key) {
  std::vector<data::EnvSpec> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) throw ConfigError(key, "expected an array of environments");
  try {
    for (const auto& e : j.at(key)) out.push_back(data::env_from_json(e));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(key, e.what());
  }
  return out;
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> k{
      "task",         "method",        "seed",           "out",          "n_per_env",       "val_fraction",
      "grayscale",    "train_envs",    "test_envs",      "idx_images",   "idx_labels",      "search_data",
      "epochs",       "batch",         "lr",             "momentum",     "backbone",        "eps",
      "lambda1",      "lambda2",       "lambda_orth",    "orth_grad",    "use_concat",      "lambda_orth_sweep",
      "n_nodes",      "channels",      "gen_channels",   "lambda_cycle", "lambda_ce",       "lr_omega",
      "lr_alpha",     "lr_gen",        "pretrain_epochs", "pretrain_lr", "retrain_epochs",  "retrain_lr",
      "retrain_batch", "retrain_momentum", "random_archs", "sigma",      "mc_n",            "mc_configs",
      "sem_steps",    "sem_lr",        "sem_batch",      "sem_lambda_orth", "sem_inits",    "orth_into_context",
      "checkpoints"};
  return k;
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config", "expected a JSON object");
  for (const auto& [key, value] : j.items())
    if (!detail::known_keys().contains(key)) throw ConfigError(key, "unknown field");
  if (!j.contains("task")) throw ConfigError("task", "required");

  ExperimentConfig c;
  std::string s;
  detail::read(j, "task", s);
  c.task = task_from_string(s);
  if (j.contains("method")) {
    detail::read(j, "method", s);
    c.method = method_from_string(s);
  }
  detail::read(j, "seed", c.seed);
  detail::read(j, "out", c.out);

  detail::read(j, "n_per_env", c.n_per_env);
  detail::read(j, "val_fraction", c.val_fraction);
  detail::read(j, "grayscale", c.grayscale);
  c.train_envs = detail::read_envs(j, "train_envs");
  c.test_envs = detail::read_envs(j, "test_envs");
  detail::read(j, "idx_images", c.idx_images);
  detail::read(j, "idx_labels", c.idx_labels);
  detail::read(j, "search_data", c.search_data);

  detail::read(j, "epochs", c.epochs);
  detail::read(j, "batch", c.batch);
  detail::read(j, "lr", c.lr);
  detail::read(j, "momentum", c.momentum);
  detail::read(j, "backbone", c.backbone);

  detail::read(j, "eps", c.decaug.eps);
  detail::read(j, "lambda1", c.decaug.lambda1);
  detail::read(j, "lambda2", c.decaug.lambda2);
  detail::read(j, "lambda_orth", c.decaug.lambda_orth);
  if (j.contains("orth_grad")) {
    detail::read(j, "orth_grad", s);
    c.decaug.orth_grad = decaug::orth_grad_from_string(s);
  }
  detail::read(j, "use_concat", c.decaug.use_concat);
  detail::read(j, "lambda_orth_sweep", c.lambda_orth_sweep);

  detail::read(j, "n_nodes", c.search.cell.n_nodes);
  detail::read(j, "channels", c.search.cell.channels);
  detail::read(j, "gen_channels", c.search.gen_channels);
  detail::read(j, "lambda_cycle", c.search.lambda_cycle);
  detail::read(j, "lambda_ce", c.search.lambda_ce);
  detail::read(j, "lr_omega", c.search.lr_omega);
  detail::read(j, "lr_alpha", c.search.lr_alpha);
  detail::read(j, "lr_gen", c.search.lr_gen);
  detail::read(j, "pretrain_epochs", c.search.pretrain_epochs);
  detail::read(j, "pretrain_lr", c.search.pretrain_lr);
  detail::read(j, "retrain_epochs", c.retrain.epochs);
  detail::read(j, "retrain_lr", c.retrain.lr);
  detail::read(j, "retrain_batch", c.retrain.batch);
  detail::read(j, "retrain_momentum", c.retrain.momentum);
  detail::read(j, "random_archs", c.random_archs);

  detail::read(j, "sigma", c.sigma);
  detail::read(j, "mc_n", c.mc_n);
  detail::read(j, "mc_configs", c.mc_configs);
  detail::read(j, "sem_steps", c.minimize.steps);
  detail::read(j, "sem_lr", c.minimize.lr);
  detail::read(j, "sem_batch", c.minimize.batch);
  detail::read(j, "sem_lambda_orth", c.minimize.lambda_orth);
  detail::read(j, "sem_inits", c.sem_inits);
  detail::read(j, "orth_into_context", c.minimize.orth_into_context);

  detail::read(j, "checkpoints", c.checkpoints);
  return c;
}

inline void validate(const ExperimentConfig& c) {
  const Method m = c.resolved_method();
  c.require_seed();
  switch (c.task) {
    case Task::kColored:
    case Task::kRotated:
    case Task::kSem:
      if (m != Method::kErm && m != Method::kDecAug)
        throw ConfigError("method", "task '" + to_string(c.task) + "' takes erm or decaug");
      break;
    case Task::kNasSearch:
      if (m != Method::kNasOod) throw ConfigError("method", "task 'nas-search' takes nasood");
      break;
    case Task::kSemVerify:
      if (m != Method::kNone) throw ConfigError("method", "task 'sem-verify' takes no method");
      break;
  }
  if (c.resolved_n_per_env() == 0) throw ConfigError("n_per_env", "must be >= 1");
  if (!(c.val_fraction >= 0.0 && c.val_fraction < 1.0)) throw ConfigError("val_fraction", "must be in [0, 1)");
  if (c.idx_images.empty() != c.idx_labels.empty())
    throw ConfigError("idx_images", "idx_images and idx_labels go together");
  if (!c.idx_images.empty() && c.task != Task::kColored)
    throw ConfigError("idx_images", "MNIST input is supported for the colored task only");
  if (c.search_data != "colored" && c.search_data != "rotated")
    throw ConfigError("search_data", "must be colored or rotated");
  if (!c.backbone.empty()) nn::backbone_from_string(c.backbone);
  if (c.task == Task::kColored || c.task == Task::kRotated) {
    if (m == Method::kDecAug) decaug::validate(c.decaug_hyper());
    if (m == Method::kErm) nn::validate(c.erm_options());
  }
  for (double l : c.lambda_orth_sweep)
    if (!(l >= 0.0)) throw ConfigError("lambda_orth_sweep", "values must be >= 0");
  if (c.task == Task::kNasSearch) {
    nas::validate(c.search_options());
    nn::validate(c.retrain);
  }
  if (!(c.sigma >= 0.0)) throw ConfigError("sigma", "must be >= 0");
  if (c.mc_n == 0) throw ConfigError("mc_n", "must be >= 1");
  if (c.minimize.batch == 0) throw ConfigError("sem_batch", "must be >= 1");
  if (!(c.minimize.lambda_orth >= 0.0)) throw ConfigError("sem_lambda_orth", "must be >= 0");
}

/// Fully resolved config; reading it back reproduces the same run.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  const Method m = c.resolved_method();
  j["task"] = to_string(c.task);
  j["method"] = to_string(m);
  j["seed"] = c.require_seed();
  j["out"] = c.output_dir().string();
  j["n_per_env"] = c.resolved_n_per_env();
  j["val_fraction"] = c.val_fraction;
  j["grayscale"] = c.grayscale;
  nlohmann::json tr = nlohmann::json::array(), te = nlohmann::json::array();
  for (const auto& e : c.resolved_train_envs()) tr.push_back(data::to_json(e));
  for (const auto& e : c.resolved_test_envs()) te.push_back(data::to_json(e));
  j["train_envs"] = tr;
  j["test_envs"] = te;
  if (!c.idx_images.empty()) j["idx_images"] = c.idx_images, j["idx_labels"] = c.idx_labels;
  j["search_data"] = c.search_data;
  j["backbone"] = nn::to_string(c.backbone_kind());
  j["momentum"] = c.momentum;

  std::size_t epochs = 0, batch = 0;
  double lr = 0;
  if (m == Method::kDecAug) {
    const auto h = c.decaug_hyper();
    epochs = h.epochs, batch = h.batch, lr = h.lr;
  } else if (m == Method::kNasOod) {
    const auto o = c.search_options();
    epochs = o.epochs, batch = o.batch, lr = o.lr;
  } else {
    const auto o = c.erm_options();
    epochs = o.epochs, batch = o.batch, lr = o.lr;
  }
  j["epochs"] = epochs, j["batch"] = batch, j["lr"] = lr;

  j["eps"] = c.decaug.eps;
  j["lambda1"] = c.decaug.lambda1;
  j["lambda2"] = c.decaug.lambda2;
  j["lambda_orth"] = c.decaug.lambda_orth;
  j["orth_grad"] = decaug::to_string(c.decaug.orth_grad);
  j["use_concat"] = c.decaug.use_concat;
  j["lambda_orth_sweep"] = c.lambda_orth_sweep;

  j["n_nodes"] = c.search.cell.n_nodes;
  j["channels"] = c.search.cell.channels;
  j["gen_channels"] = c.search.gen_channels;
  j["lambda_cycle"] = c.search.lambda_cycle;
  j["lambda_ce"] = c.search.lambda_ce;
  j["lr_omega"] = c.search.lr_omega;
  j["lr_alpha"] = c.search.lr_alpha;
  j["lr_gen"] = c.search.lr_gen;
  j["pretrain_epochs"] = c.search.pretrain_epochs;
  j["pretrain_lr"] = c.search.pretrain_lr;
  j["retrain_epochs"] = c.retrain.epochs;
  j["retrain_lr"] = c.retrain.lr;
  j["retrain_batch"] = c.retrain.batch;
  j["retrain_momentum"] = c.retrain.momentum;
  j["random_archs"] = c.random_archs;

  j["sigma"] = c.sigma;
  j["mc_n"] = c.mc_n;
  j["mc_configs"] = c.mc_configs;
  j["sem_steps"] = c.minimize.steps;
  j["sem_lr"] = c.minimize.lr;
  j["sem_batch"] = c.minimize.batch;
  j["sem_lambda_orth"] = c.minimize.lambda_orth;
  j["sem_inits"] = c.sem_inits;
  j["orth_into_context"] = c.minimize.orth_into_context;
  j["checkpoints"] = c.checkpoints;
  return j;
}

/// Applies `key=value` overrides to a config document. The value is parsed as
/// JSON when possible (numbers, booleans, arrays) and kept as a string
/// otherwise.
inline void apply_override(nlohmann::json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq), value = assignment.substr(eq + 1);
  if (!detail::known_keys().contains(key)) throw ConfigError(key, "unknown field");
  try {
    j[key] = nlohmann::json::parse(value);
  } catch (const nlohmann::json::parse_error&) {
    j[key] = value;
  }
}

/// Data fields that make two runs comparable.
inline nlohmann::json dataset_signature(const ExperimentConfig& c) {
  if (c.task == Task::kSem || c.task == Task::kSemVerify) return {{"task", to_string(c.task)}, {"sigma", c.sigma}};
  const auto full = to_json(c);
  nlohmann::json s;
  for (const char* k : {"n_per_env", "val_fraction", "grayscale", "train_envs", "test_envs", "idx_images"})
    if (full.contains(k)) s[k] = full[k];
  s["task"] = c.data_task();
  return s;
}

}  // namespace oodkit::harness
