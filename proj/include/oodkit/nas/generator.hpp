// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Conditional image-to-image generator G(x, k). The domain index k is a
// one-hot of length K+1 broadcast over the image and stacked onto x as extra
// channels. Encoder: two stride-2 convs; one residual block; decoder: two
// stride-2 transposed convs. The decoder output is added to x and clamped
// to [0, 1].

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "oodkit/autodiff.hpp"
#include "oodkit/nn/classifier.hpp"
#include "oodkit/nn/layers.hpp"

namespace oodkit::nas {

struct CondGenerator {
  std::size_t n_domains = 0;  // K + 1
  nn::Conv2d down1, down2;
  nn::Conv2d res_a, res_b;
  nn::ConvTranspose2d up1, up2;

  std::size_t novel_domain() const { return n_domains - 1; }

  nn::ParamList params() {
    nn::ParamList out;
    for (auto* c : {&down1, &down2, &res_a, &res_b}) c->collect(out);
    up1.collect(out);
    up2.collect(out);
    return out;
  }
};

inline CondGenerator make_generator(std::size_t in_channels, std::size_t n_source_domains, std::size_t width,
                                    std::uint64_t seed) {
  if (n_source_domains < 1) throw ConfigError("domains", "need at least one source domain");
  if (width < 1) throw ConfigError("gen_channels", "must be >= 1");
  Rng rng(seed, "generator_init");
  CondGenerator g;
  g.n_domains = n_source_domains + 1;
  const ConvParams down{2, 1, 1, 1}, same{1, 1, 1, 1};
  g.down1 = nn::Conv2d(in_channels + g.n_domains, width, 3, down, rng);
  g.down2 = nn::Conv2d(width, 2 * width, 3, down, rng);
  g.res_a = nn::Conv2d(2 * width, 2 * width, 3, same, rng);
  g.res_b = nn::Conv2d(2 * width, 2 * width, 3, same, rng);
  g.up1 = nn::ConvTranspose2d(2 * width, width, 3, down, 1, rng);
  g.up2 = nn::ConvTranspose2d(width, in_channels, 3, down, 1, rng);
  return g;
}

/// [B, K+1, H, W] planes, one-hot per sample.
inline Array domain_planes(std::span<const int> domains, std::size_t n_domains, std::size_t h, std::size_t w) {
  Array out(Shape{domains.size(), n_domains, h, w}, 0.0);
  for (std::size_t b = 0; b < domains.size(); ++b) {
    if (domains[b] < 0 || static_cast<std::size_t>(domains[b]) >= n_domains)
      throw ShapeError("generate: domain " + std::to_string(domains[b]) + " outside [0, " +
                       std::to_string(n_domains) + ")");
    const std::size_t at = (b * n_domains + static_cast<std::size_t>(domains[b])) * h * w;
    for (std::size_t p = 0; p < h * w; ++p) out[at + p] = 1.0;
  }
  return out;
}

inline Tensor generate(const CondGenerator& g, const Tensor& x, std::span<const int> domains) {
  if (x.rank() != 4) throw ShapeError("generate: expected [B, C, H, W] input");
  if (domains.size() != x.dim(0)) throw ShapeError("generate: one domain per sample");
  if (x.dim(2) % 4 || x.dim(3) % 4) throw ShapeError("generate: height and width must be divisible by 4");
  if (g.down1.weight.dim(1) != x.dim(1) + g.n_domains) throw ShapeError("generate: channel count mismatch");
  const Tensor code(domain_planes(domains, g.n_domains, x.dim(2), x.dim(3)));
  Tensor h = relu(g.down1(concat({x, code}, 1)));
  h = relu(g.down2(h));
  h = add(h, g.res_b(relu(g.res_a(h))));
  h = relu(g.up1(h));
  return clamp(add(x, g.up2(h)), 0.0, 1.0);
}

inline Tensor generate(const CondGenerator& g, const Tensor& x, int domain) {
  return generate(g, x, std::vector<int>(x.dim(0), domain));
}

struct AuxLoss {
  Tensor total, cycle, ce;
  double shift = 0;  // mean |G(x, novel) - x|, not differentiated
};

/// lambda_cycle * mean |G(G(x, novel), k) - x| + lambda_ce * CE(Y(G(x, novel)), y)
/// with Y held fixed.
inline AuxLoss aux_loss(const CondGenerator& g, const Tensor& x, std::span<const int> domains,
                        std::span<const int> y, const nn::Classifier& Y, double lambda_cycle, double lambda_ce) {
  AuxLoss out;
  const Tensor syn = generate(g, x, static_cast<int>(g.novel_domain()));
  out.cycle = mean(abs(sub(generate(g, syn, domains), x)));
  out.shift = mean(abs(sub(detach(syn), detach(x)))).item();
  out.ce = cross_entropy(Y(syn), y);
  out.total = add(scale(out.cycle, lambda_cycle), scale(out.ce, lambda_ce));
  return out;
}

}  // namespace oodkit::nas
