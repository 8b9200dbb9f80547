// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint layout:
//   8 bytes   magic "OODKCKPT"
//   8 bytes   header length H (uint64 little-endian)
//   H bytes   JSON header: {"groups": [{"name", "shapes"}...], "meta": {...}}
//   float64 little-endian parameter values, groups and tensors in header order

#pragma once

#include <bit>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "oodkit/core/bytes.hpp"
#include "oodkit/nn/layers.hpp"

namespace oodkit::nn {

inline constexpr char kCheckpointMagic[9] = "OODKCKPT";

struct NamedGroup {
  std::string name;
  ParamList params;
};

inline void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedGroup>& groups,
                            const nlohmann::json& meta) {
  nlohmann::json header;
  header["groups"] = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& g : groups) {
    nlohmann::json shapes = nlohmann::json::array();
    for (const auto* p : g.params) {
      shapes.push_back(p->shape());
      total += p->numel();
    }
    header["groups"].push_back({{"name", g.name}, {"shapes", shapes}});
  }
  header["meta"] = meta;
  const std::string h = header.dump();

  std::string buf(kCheckpointMagic, 8);
  bytes::put_le(buf, h.size(), 8);
  buf += h;
  buf.reserve(buf.size() + 8 * total);
  for (const auto& g : groups)
    for (const auto* p : g.params)
      for (double v : p->value().data()) bytes::put_le(buf, std::bit_cast<std::uint64_t>(v), 8);
  bytes::spit(path, buf);
}

/// Loads values into `groups`, whose names and shapes must match the file.
/// Returns the stored meta object.
inline nlohmann::json load_checkpoint(const std::filesystem::path& path, const std::vector<NamedGroup>& groups) {
  const std::string buf = bytes::slurp(path);
  if (buf.size() < 16 || buf.compare(0, 8, kCheckpointMagic) != 0)
    throw FormatError(path.string() + ": not a checkpoint file");
  const std::uint64_t hlen = bytes::get_le(buf, 8, 8);
  if (hlen > buf.size() - 16) throw FormatError(path.string() + ": truncated header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(buf.substr(16, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": bad header: " + e.what());
  }
  const auto& hg = header.at("groups");
  if (hg.size() != groups.size()) throw FormatError(path.string() + ": group count mismatch");

  std::size_t at = 16 + hlen;
  std::vector<std::pair<Tensor*, Array>> loaded;
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& g = groups[gi];
    if (hg[gi].at("name").get<std::string>() != g.name)
      throw FormatError(path.string() + ": expected group '" + g.name + "'");
    const auto& shapes = hg[gi].at("shapes");
    if (shapes.size() != g.params.size()) throw FormatError(path.string() + ": tensor count mismatch in " + g.name);
    for (std::size_t k = 0; k < g.params.size(); ++k) {
      const Shape s = shapes[k].get<Shape>();
      if (s != g.params[k]->shape())
        throw FormatError(path.string() + ": shape mismatch in " + g.name + ": file "  + oodkit::to_string(s) + ", model " +
                          oodkit::to_string(g.params[k]->shape()));
      Array a(s);
      if (buf.size() < at + 8 * a.numel()) throw FormatError(path.string() + ": truncated data");
      for (std::size_t i = 0; i < a.numel(); ++i, at += 8) a[i] = std::bit_cast<double>(bytes::get_le(buf, at, 8));
      loaded.emplace_back(g.params[k], std::move(a));
    }
  }
  if (at != buf.size()) throw FormatError(path.string() + ": trailing bytes");
  for (auto& [p, a] : loaded) *p = Tensor(std::move(a));
  return header.value("meta", nlohmann::json::object());
}

}  // namespace oodkit::nn
