// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// On-disk dataset layout: one env_<id>.bin per environment plus manifest.json.
// A record is int32 y, int32 c, then the input values as float64, all
// little-endian; the record count and input shape come from the manifest.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "oodkit/core/bytes.hpp"
#include "oodkit/core/error.hpp"
#include "oodkit/data/dataset.hpp"

namespace oodkit::data {

struct DatasetInfo {
  std::string task;
  std::uint64_t seed = 0;
  std::vector<EnvSpec> envs;
};

namespace detail {
using bytes::get_le;
using bytes::put_le;
using bytes::slurp;
}  // namespace detail

inline nlohmann::json to_json(const EnvSpec& e) {
  return {{"id", e.id}, {"correlation", e.correlation}, {"angle_deg", e.angle_deg}, {"flip", e.flip}, {"n", e.n}};
}

inline EnvSpec env_from_json(const nlohmann::json& j) {
  EnvSpec e;
  e.id = j.at("id").get<int>();
  e.correlation = j.value("correlation", 0.5);
  e.angle_deg = j.value("angle_deg", 0.0);
  e.flip = j.value("flip", 0.25);
  e.n = j.value("n", std::size_t{0});
  return e;
}

/// Writes `ds` into `dir` (created if missing). Returns the manifest.
inline nlohmann::json write_dataset(const std::filesystem::path& dir, const Dataset& ds, const DatasetInfo& info) {
  if (ds.empty()) throw ConfigError("dataset", "nothing to export");
  std::filesystem::create_directories(dir);
  const Shape shape = ds.front().x.shape();
  std::map<int, std::string> buffers;
  std::map<int, std::size_t> counts;
  for (const auto& ex : ds) {
    if (ex.x.shape() != shape) throw ShapeError("write_dataset: ragged inputs");
    auto& buf = buffers[ex.env];
    detail::put_le(buf, static_cast<std::uint32_t>(ex.y), 4);
    detail::put_le(buf, static_cast<std::uint32_t>(ex.c), 4);
    for (double v : ex.x.data()) detail::put_le(buf, std::bit_cast<std::uint64_t>(v), 8);
    ++counts[ex.env];
  }
  nlohmann::json manifest;
  manifest["format"] = "oodkit-dataset-1";
  manifest["task"] = info.task;
  manifest["seed"] = info.seed;
  manifest["sample_shape"] = shape;
  manifest["record"] = "int32 y, int32 c, float64 x[prod(sample_shape)], little-endian";
  nlohmann::json envs = nlohmann::json::array();
  for (const auto& [id, buf] : buffers) {
    const std::string file = "env_" + std::to_string(id) + ".bin";
    std::ofstream out(dir / file, std::ios::binary);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("failed writing " + (dir / file).string());
    nlohmann::json entry = {{"id", id}, {"file", file}, {"count", counts[id]}};
    for (const auto& e : info.envs)
      if (e.id == id) entry["spec"] = to_json(e);
    envs.push_back(entry);
  }
  manifest["envs"] = envs;
  std::ofstream(dir / "manifest.json") << manifest.dump(2) << '\n';
  return manifest;
}

inline Dataset read_dataset(const std::filesystem::path& dir) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(detail::slurp(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("manifest.json: ") + e.what());
  }
  const Shape shape = manifest.at("sample_shape").get<Shape>();
  const std::size_t numel = numel_of(shape);
  const std::size_t rec = 8 + 8 * numel;
  Dataset out;
  for (const auto& env : manifest.at("envs")) {
    const std::string buf = detail::slurp(dir / env.at("file").get<std::string>());
    const auto count = env.at("count").get<std::size_t>();
    if (buf.size() != count * rec) throw FormatError(env.at("file").get<std::string>() + ": size mismatch");
    const int id = env.at("id").get<int>();
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t at = k * rec;
      Example ex;
      ex.y = static_cast<std::int32_t>(detail::get_le(buf, at, 4));
      ex.c = static_cast<std::int32_t>(detail::get_le(buf, at + 4, 4));
      ex.env = id;
      ex.x = Array(shape);
      for (std::size_t i = 0; i < numel; ++i) ex.x[i] = std::bit_cast<double>(detail::get_le(buf, at + 8 + 8 * i, 8));
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace oodkit::data
