// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// NCHW convolutions and pooling, computed with direct loops.
//
// conv2d, conv2d_input_grad and conv2d_weight_grad are the three faces of one
// bilinear form <dy, conv(x, w)>; each one's backward is written with the other
// two, so every order of derivative stays inside this closed set. Pooling ops
// come in adjoint pairs in the same way.

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "oodkit/autodiff/ops.hpp"

namespace oodkit {

struct ConvParams {
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;
  std::size_t groups = 1;
};

namespace detail {

inline std::size_t conv_out_size(std::size_t in, std::size_t k, const ConvParams& p) {
  const long span = static_cast<long>(p.dilation * (k - 1) + 1);
  const long num = static_cast<long>(in + 2 * p.padding) - span;
  if (num < 0) throw ShapeError("convolution kernel larger than padded input");
  return static_cast<std::size_t>(num) / p.stride + 1;
}

struct ConvGeom {
  std::size_t n, c, h, w;      // input
  std::size_t o, kh, kw;       // weight [o, c/groups, kh, kw]
  std::size_t oh, ow;          // output
  std::size_t cg, og;          // channels per group
};

inline ConvGeom conv_geom(const Shape& x, const Shape& w, const ConvParams& p, std::size_t oh, std::size_t ow) {
  ConvGeom g{x[0], x[1], x[2], x[3], w[0], w[2], w[3], oh, ow, 0, 0};
  if (p.groups == 0 || g.c % p.groups || g.o % p.groups)
    throw ShapeError("conv: channels not divisible by groups");
  g.cg = g.c / p.groups;
  g.og = g.o / p.groups;
  if (w[1] != g.cg) throw ShapeError("conv: weight " + to_string(w) + " does not match input channels " + std::to_string(g.c));
  return g;
}

// Visits every (output pixel, input pixel, weight tap) triple.
// f(y_index, x_index, w_index)
template <class F>
void conv_visit(const ConvGeom& g, const ConvParams& p, F&& f) {
  const long pad = static_cast<long>(p.padding);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t o = 0; o < g.o; ++o) {
      const std::size_t grp = o / g.og;
      const std::size_t ybase = (n * g.o + o) * g.oh * g.ow;
      for (std::size_t ci = 0; ci < g.cg; ++ci) {
        const std::size_t c = grp * g.cg + ci;
        const std::size_t xbase = (n * g.c + c) * g.h * g.w;
        const std::size_t wbase = (o * g.cg + ci) * g.kh * g.kw;
        for (std::size_t a = 0; a < g.kh; ++a)
          for (std::size_t b = 0; b < g.kw; ++b) {
            const std::size_t widx = wbase + a * g.kw + b;
            const long da = static_cast<long>(a * p.dilation) - pad;
            const long db = static_cast<long>(b * p.dilation) - pad;
            for (std::size_t i = 0; i < g.oh; ++i) {
              const long ih = static_cast<long>(i * p.stride) + da;
              if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
              const std::size_t xrow = xbase + static_cast<std::size_t>(ih) * g.w;
              const std::size_t yrow = ybase + i * g.ow;
              for (std::size_t j = 0; j < g.ow; ++j) {
                const long iw = static_cast<long>(j * p.stride) + db;
                if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
                f(yrow + j, xrow + static_cast<std::size_t>(iw), widx);
              }
            }
          }
      }
    }
}

inline void require_rank4(const char* op, const Tensor& t) {
  if (t.rank() != 4) throw ShapeError(std::string(op) + ": expected NCHW tensor, got " + to_string(t.shape()));
}

}  // namespace detail

Tensor conv2d_input_grad(const Tensor& dy, const Tensor& w, std::size_t h, std::size_t wd, const ConvParams& p);
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& dy, std::size_t kh, std::size_t kw, const ConvParams& p);

/// y[n,o] = sum_c x[n,c] (*) w[o,c]; weight shape [O, C/groups, KH, KW].
inline Tensor conv2d(const Tensor& x, const Tensor& w, const ConvParams& p = {}) {
  detail::require_rank4("conv2d", x);
  detail::require_rank4("conv2d", w);
  const std::size_t oh = detail::conv_out_size(x.dim(2), w.dim(2), p);
  const std::size_t ow = detail::conv_out_size(x.dim(3), w.dim(3), p);
  const auto g = detail::conv_geom(x.shape(), w.shape(), p, oh, ow);
  Array y(Shape{g.n, g.o, oh, ow}, 0.0);
  const double* X = x.value().data().data();
  const double* W = w.value().data().data();
  double* Y = y.data().data();
  detail::conv_visit(g, p, [&](std::size_t yi, std::size_t xi, std::size_t wi) { Y[yi] += X[xi] * W[wi]; });
  const std::size_t h = g.h, wd = g.w, kh = g.kh, kw = g.kw;
  return Tape::make("conv2d", std::move(y), {x, w},
                    [x, w, p, h, wd, kh, kw](const Tensor& gy, const Tensor&, const std::vector<char>& need) {
                      Tensor gx, gw;
                      if (need[0]) gx = conv2d_input_grad(gy, w, h, wd, p);
                      if (need[1]) gw = conv2d_weight_grad(x, gy, kh, kw, p);
                      return std::vector<Tensor>{gx, gw};
                    });
}

/// Adjoint of conv2d in x: maps an output-shaped tensor back to input shape
/// [N, C, h, wd]. This is also the transposed convolution.
inline Tensor conv2d_input_grad(const Tensor& dy, const Tensor& w, std::size_t h, std::size_t wd, const ConvParams& p) {
  detail::require_rank4("conv2d_input_grad", dy);
  detail::require_rank4("conv2d_input_grad", w);
  const std::size_t c = w.dim(1) * p.groups;
  const Shape xs{dy.dim(0), c, h, wd};
  const std::size_t oh = detail::conv_out_size(h, w.dim(2), p);
  const std::size_t ow = detail::conv_out_size(wd, w.dim(3), p);
  if (dy.dim(1) != w.dim(0) || dy.dim(2) != oh || dy.dim(3) != ow)
    throw ShapeError("conv2d_input_grad: gradient " + to_string(dy.shape()) + " inconsistent with weight " +
                     to_string(w.shape()) + " and input size " + std::to_string(h) + "x" + std::to_string(wd));
  const auto g = detail::conv_geom(xs, w.shape(), p, oh, ow);
  Array x(xs, 0.0);
  const double* DY = dy.value().data().data();
  const double* W = w.value().data().data();
  double* X = x.data().data();
  detail::conv_visit(g, p, [&](std::size_t yi, std::size_t xi, std::size_t wi) { X[xi] += DY[yi] * W[wi]; });
  const std::size_t kh = g.kh, kw = g.kw;
  return Tape::make("conv2d_input_grad", std::move(x), {dy, w},
                    [dy, w, p, kh, kw](const Tensor& gx, const Tensor&, const std::vector<char>& need) {
                      Tensor gdy, gw;
                      if (need[0]) gdy = conv2d(gx, w, p);
                      if (need[1]) gw = conv2d_weight_grad(gx, dy, kh, kw, p);
                      return std::vector<Tensor>{gdy, gw};
                    });
}

/// Adjoint of conv2d in w: correlation of input with an output-shaped tensor.
inline Tensor conv2d_weight_grad(const Tensor& x, const Tensor& dy, std::size_t kh, std::size_t kw, const ConvParams& p) {
  detail::require_rank4("conv2d_weight_grad", x);
  detail::require_rank4("conv2d_weight_grad", dy);
  const Shape ws{dy.dim(1), x.dim(1) / p.groups, kh, kw};
  const std::size_t oh = detail::conv_out_size(x.dim(2), kh, p);
  const std::size_t ow = detail::conv_out_size(x.dim(3), kw, p);
  if (dy.dim(0) != x.dim(0) || dy.dim(2) != oh || dy.dim(3) != ow)
    throw ShapeError("conv2d_weight_grad: gradient " + to_string(dy.shape()) + " inconsistent with input " + to_string(x.shape()));
  const auto g = detail::conv_geom(x.shape(), ws, p, oh, ow);
  Array w(ws, 0.0);
  const double* X = x.value().data().data();
  const double* DY = dy.value().data().data();
  double* W = w.data().data();
  detail::conv_visit(g, p, [&](std::size_t yi, std::size_t xi, std::size_t wi) { W[wi] += X[xi] * DY[yi]; });
  const std::size_t h = g.h, wd = g.w;
  return Tape::make("conv2d_weight_grad", std::move(w), {x, dy},
                    [x, dy, p, h, wd](const Tensor& gw, const Tensor&, const std::vector<char>& need) {
                      Tensor gx, gdy;
                      if (need[0]) gx = conv2d_input_grad(dy, gw, h, wd, p);
                      if (need[1]) gdy = conv2d(x, gw, p);
                      return std::vector<Tensor>{gx, gdy};
                    });
}

/// Transposed convolution. Weight shape [C_in, C_out/groups, KH, KW] (the
/// weight of the forward conv it transposes). Output size is
/// (in - 1) * stride - 2 * padding + dilation * (k - 1) + 1 + output_padding.
inline Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const ConvParams& p = {}, std::size_t output_padding = 0) {
  detail::require_rank4("conv_transpose2d", x);
  detail::require_rank4("conv_transpose2d", w);
  auto out_size = [&](std::size_t in, std::size_t k) {
    const long s = static_cast<long>((in - 1) * p.stride + p.dilation * (k - 1) + 1 + output_padding) -
                   2 * static_cast<long>(p.padding);
    if (s <= 0) throw ShapeError("conv_transpose2d: empty output");
    return static_cast<std::size_t>(s);
  };
  return conv2d_input_grad(x, w, out_size(x.dim(2), w.dim(2)), out_size(x.dim(3), w.dim(3)), p);
}

// ---------------------------------------------------------------------------
// Pooling

struct PoolParams {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;
};

using IndexMap = std::shared_ptr<const std::vector<std::size_t>>;

Tensor scatter_add(const Tensor& g, const IndexMap& idx, const Shape& out_shape);

/// out[i] = x[idx[i]]
inline Tensor gather(const Tensor& x, const IndexMap& idx, const Shape& out_shape) {
  if (idx->size() != numel_of(out_shape)) throw ShapeError("gather: index count does not match output shape");
  Array out(out_shape);
  const Array& xv = x.value();
  for (std::size_t i = 0; i < idx->size(); ++i) out[i] = xv[(*idx)[i]];
  const Shape xs = x.shape();
  return Tape::make("gather", std::move(out), {x}, [idx, xs](const Tensor& g, const Tensor&, const std::vector<char>&) {
    return std::vector<Tensor>{scatter_add(g, idx, xs)};
  });
}

/// out[idx[i]] += g[i]; adjoint of gather.
inline Tensor scatter_add(const Tensor& g, const IndexMap& idx, const Shape& out_shape) {
  if (idx->size() != g.numel()) throw ShapeError("scatter_add: index count does not match input");
  Array out(out_shape, 0.0);
  const Array& gv = g.value();
  for (std::size_t i = 0; i < idx->size(); ++i) out[(*idx)[i]] += gv[i];
  const Shape gs = g.shape();
  return Tape::make("scatter_add", std::move(out), {g}, [idx, gs](const Tensor& h, const Tensor&, const std::vector<char>&) {
    return std::vector<Tensor>{gather(h, idx, gs)};
  });
}

namespace detail {

inline std::size_t pool_out(std::size_t in, const PoolParams& p) {
  if (in + 2 * p.padding < p.kernel) throw ShapeError("pool kernel larger than padded input");
  return (in + 2 * p.padding - p.kernel) / p.stride + 1;
}

// f(plane, out_index_in_plane, in_index_in_plane, window_count) over valid taps.
template <class F>
void pool_visit(std::size_t planes, std::size_t h, std::size_t w, const PoolParams& p, F&& f) {
  const std::size_t oh = pool_out(h, p), ow = pool_out(w, p);
  for (std::size_t pl = 0; pl < planes; ++pl)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const long r0 = static_cast<long>(i * p.stride) - static_cast<long>(p.padding);
        const long c0 = static_cast<long>(j * p.stride) - static_cast<long>(p.padding);
        const long r1 = std::min<long>(r0 + static_cast<long>(p.kernel), static_cast<long>(h));
        const long c1 = std::min<long>(c0 + static_cast<long>(p.kernel), static_cast<long>(w));
        const long rs = std::max<long>(r0, 0), cs = std::max<long>(c0, 0);
        const std::size_t count = static_cast<std::size_t>((r1 - rs) * (c1 - cs));
        for (long r = rs; r < r1; ++r)
          for (long c = cs; c < c1; ++c)
            f(pl, i * ow + j, static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c), count);
      }
}

}  // namespace detail

/// Max pooling over valid taps; ties resolve to the first tap in row-major order.
inline Tensor max_pool2d(const Tensor& x, const PoolParams& p = {}) {
  detail::require_rank4("max_pool2d", x);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = detail::pool_out(h, p), ow = detail::pool_out(w, p);
  auto idx = std::make_shared<std::vector<std::size_t>>(n * c * oh * ow, 0);
  std::vector<double> best(idx->size(), -std::numeric_limits<double>::infinity());
  const Array& xv = x.value();
  detail::pool_visit(n * c, h, w, p, [&](std::size_t pl, std::size_t o, std::size_t i, std::size_t) {
    const std::size_t oi = pl * oh * ow + o, xi = pl * h * w + i;
    if (xv[xi] > best[oi]) {
      best[oi] = xv[xi];
      (*idx)[oi] = xi;
    }
  });
  return gather(x, std::move(idx), Shape{n, c, oh, ow});
}

Tensor avg_pool2d_adjoint(const Tensor& g, const PoolParams& p, std::size_t h, std::size_t w);

/// Average pooling; the divisor counts only taps inside the input.
inline Tensor avg_pool2d(const Tensor& x, const PoolParams& p = {}) {
  detail::require_rank4("avg_pool2d", x);
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t oh = detail::pool_out(h, p), ow = detail::pool_out(w, p);
  Array out(Shape{n, c, oh, ow}, 0.0);
  const Array& xv = x.value();
  detail::pool_visit(n * c, h, w, p, [&](std::size_t pl, std::size_t o, std::size_t i, std::size_t cnt) {
    out[pl * oh * ow + o] += xv[pl * h * w + i] / static_cast<double>(cnt);
  });
  return Tape::make("avg_pool2d", std::move(out), {x}, [p, h, w](const Tensor& g, const Tensor&, const std::vector<char>&) {
    return std::vector<Tensor>{avg_pool2d_adjoint(g, p, h, w)};
  });
}

inline Tensor avg_pool2d_adjoint(const Tensor& g, const PoolParams& p, std::size_t h, std::size_t w) {
  detail::require_rank4("avg_pool2d_adjoint", g);
  const std::size_t n = g.dim(0), c = g.dim(1);
  const std::size_t oh = detail::pool_out(h, p), ow = detail::pool_out(w, p);
  if (g.dim(2) != oh || g.dim(3) != ow) throw ShapeError("avg_pool2d_adjoint: gradient shape mismatch");
  Array out(Shape{n, c, h, w}, 0.0);
  const Array& gv = g.value();
  detail::pool_visit(n * c, h, w, p, [&](std::size_t pl, std::size_t o, std::size_t i, std::size_t cnt) {
    out[pl * h * w + i] += gv[pl * oh * ow + o] / static_cast<double>(cnt);
  });
  return Tape::make("avg_pool2d_adjoint", std::move(out), {g}, [p](const Tensor& h2, const Tensor&, const std::vector<char>&) {
    return std::vector<Tensor>{avg_pool2d(h2, p)};
  });
}

/// Mean over spatial dims: [N, C, H, W] -> [N, C].
inline Tensor global_avg_pool(const Tensor& x) {
  detail::require_rank4("global_avg_pool", x);
  const std::size_t n = x.dim(0), c = x.dim(1);
  return reshape(mean(reshape(x, Shape{n, c, x.dim(2) * x.dim(3)}), 2), Shape{n, c});
}

}  // namespace oodkit
