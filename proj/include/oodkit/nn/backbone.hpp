// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Feature extractors shared by the ERM baseline and DecAug.

#pragma once

#include <string>
#include <vector>

#include "oodkit/nn/layers.hpp"

namespace oodkit::nn {

enum class BackboneKind { kMlp, kConv };

inline std::string to_string(BackboneKind k) { return k == BackboneKind::kMlp ? "mlp" : "conv"; }

inline BackboneKind backbone_from_string(const std::string& s) {
  if (s == "mlp") return BackboneKind::kMlp;
  if (s == "conv") return BackboneKind::kConv;
  throw ConfigError("backbone", "expected 'mlp' or 'conv', got '" + s + "'");
}

struct BackboneSpec {
  BackboneKind kind = BackboneKind::kMlp;
  Shape sample_shape{2, 8, 8};  // one example, without the batch axis
  std::size_t hidden = 64;      // mlp width
  std::size_t mlp_out = 64;     // mlp feature size
  std::size_t channels = 8;     // conv width

  bool operator==(const BackboneSpec&) const = default;
};

/// mlp:  flatten -> [linear, relu] x 3
/// conv: [conv 3x3 pad 1, relu, avgpool 2] x 2 -> flatten
struct Backbone {
  BackboneSpec spec;
  std::vector<Linear> dense;
  std::vector<Conv2d> convs;

  Backbone() = default;
  Backbone(const BackboneSpec& s, Rng& rng) : spec(s) {
    if (s.sample_shape.empty()) throw ConfigError("sample_shape", "must be non-empty");
    if (s.kind == BackboneKind::kMlp) {
      const std::size_t in = numel_of(s.sample_shape);
      dense.emplace_back(in, s.hidden, rng);
      dense.emplace_back(s.hidden, s.hidden, rng);
      dense.emplace_back(s.hidden, s.mlp_out, rng);
    } else {
      if (s.sample_shape.size() != 3) throw ConfigError("sample_shape", "conv backbone needs [channels, h, w]");
      if (s.sample_shape[1] % 4 || s.sample_shape[2] % 4)
        throw ConfigError("sample_shape", "conv backbone needs height and width divisible by 4");
      const ConvParams p{1, 1, 1, 1};
      convs.emplace_back(s.sample_shape[0], s.channels, 3, p, rng);
      convs.emplace_back(s.channels, s.channels, 3, p, rng);
    }
  }

  std::size_t out_dim() const {
    if (spec.kind == BackboneKind::kMlp) return spec.mlp_out;
    return spec.channels * (spec.sample_shape[1] / 4) * (spec.sample_shape[2] / 4);
  }

  Tensor operator()(const Tensor& x) const {
    const std::size_t b = x.dim(0);
    if (spec.kind == BackboneKind::kMlp) {
      Tensor h = reshape(x, Shape{b, x.numel() / b});
      for (const auto& l : dense) h = relu(l(h));
      return h;
    }
    Tensor h = x;
    for (const auto& c : convs) h = avg_pool2d(relu(c(h)), PoolParams{2, 2, 0});
    return reshape(h, Shape{b, h.numel() / b});
  }

  void collect(ParamList& out) {
    for (auto& l : dense) l.collect(out);
    for (auto& c : convs) c.collect(out);
  }
};

}  // namespace oodkit::nn
