// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor ops. Every backward rule is expressed with ops from
// this file (or conv.hpp), which is what makes second-order gradients work.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "oodkit/autodiff/tape.hpp"
#include "oodkit/core/array.hpp"

namespace oodkit {

namespace detail {

inline void require_same_rank2(const char* op, const Tensor& t) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + to_string(t.shape()));
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    out[i] = std::max(da, db);
  }
  return out;
}

// Strides of `s` laid out against output shape `out` (0 along broadcast dims).
inline std::vector<std::size_t> broadcast_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> st(out.size(), 0);
  std::size_t acc = 1;
  for (std::size_t i = s.size(); i-- > 0;) {
    const std::size_t oi = i + (out.size() - s.size());
    st[oi] = s[i] == 1 ? 0 : acc;
    acc *= s[i];
  }
  return st;
}

// Calls f(out_index, a_index, b_index) for every element of the broadcast result.
template <class F>
void for_each_broadcast(const Shape& a, const Shape& b, const Shape& out, F&& f) {
  const std::size_t total = numel_of(out);
  if (a == out && b == out) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const auto sa = broadcast_strides(a, out);
  const auto sb = broadcast_strides(b, out);
  const std::size_t r = out.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < total; ++o) {
    f(o, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + to_string(s));
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

template <class F>
Array map(const Array& x, F&& f) {
  Array out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  return out;
}

}  // namespace detail

Tensor broadcast_to(const Tensor& x, const Shape& shape);
Tensor sum_to(const Tensor& x, const Shape& shape);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor pow(const Tensor& x, double p);
Tensor scale(const Tensor& x, double c);

// ---------------------------------------------------------------------------
// Broadcasting and reduction to shape

inline Tensor sum_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  const Shape full = detail::broadcast_shape(shape, x.shape());
  if (full != x.shape()) throw ShapeError("sum_to: " + to_string(x.shape()) + " does not reduce to " + to_string(shape));
  Array out(shape, 0.0);
  const Array& xv = x.value();
  detail::for_each_broadcast(x.shape(), shape, x.shape(), [&](std::size_t o, std::size_t, std::size_t ib) { out[ib] += xv[o]; });
  const Shape xs = x.shape();
  return Tape::make("sum_to", std::move(out), {x},
                    [xs](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{broadcast_to(g, xs)};
                    });
}

inline Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  if (x.shape() == shape) return x;
  if (detail::broadcast_shape(x.shape(), shape) != shape)
    throw ShapeError("broadcast_to: " + to_string(x.shape()) + " does not broadcast to " + to_string(shape));
  Array out(shape);
  const Array& xv = x.value();
  detail::for_each_broadcast(x.shape(), shape, shape, [&](std::size_t o, std::size_t ia, std::size_t) { out[o] = xv[ia]; });
  const Shape xs = x.shape();
  return Tape::make("broadcast_to", std::move(out), {x},
                    [xs](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{sum_to(g, xs)};
                    });
}

// ---------------------------------------------------------------------------
// Elementwise binary

namespace detail {
template <class F>
Array binary(const Tensor& a, const Tensor& b, F&& f) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  Array out(out_shape);
  const Array& av = a.value();
  const Array& bv = b.value();
  for_each_broadcast(a.shape(), b.shape(), out_shape,
                     [&](std::size_t o, std::size_t ia, std::size_t ib) { out[o] = f(av[ia], bv[ib]); });
  return out;
}
}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) {
  const Shape as = a.shape(), bs = b.shape();
  return Tape::make("add", detail::binary(a, b, [](double x, double y) { return x + y; }), {a, b},
                    [as, bs](const Tensor& g, const Tensor&, const std::vector<char>& need) {
                      return std::vector<Tensor>{need[0] ? sum_to(g, as) : Tensor(), need[1] ? sum_to(g, bs) : Tensor()};
                    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  const Shape as = a.shape(), bs = b.shape();
  return Tape::make("sub", detail::binary(a, b, [](double x, double y) { return x - y; }), {a, b},
                    [as, bs](const Tensor& g, const Tensor&, const std::vector<char>& need) {
                      return std::vector<Tensor>{need[0] ? sum_to(g, as) : Tensor(),
                                                 need[1] ? sum_to(neg(g), bs) : Tensor()};
                    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return Tape::make("mul", detail::binary(a, b, [](double x, double y) { return x * y; }), {a, b},
                    [a, b](const Tensor& g, const Tensor&, const std::vector<char>& need) {
                      return std::vector<Tensor>{need[0] ? sum_to(mul(g, b), a.shape()) : Tensor(),
                                                 need[1] ? sum_to(mul(g, a), b.shape()) : Tensor()};
                    });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return Tape::make("div", detail::binary(a, b, [](double x, double y) { return x / y; }), {a, b},
                    [a, b](const Tensor& g, const Tensor& out, const std::vector<char>& need) {
                      Tensor ga, gb;
                      if (need[0]) ga = sum_to(div(g, b), a.shape());
                      if (need[1]) gb = sum_to(neg(div(mul(g, out), b)), b.shape());
                      return std::vector<Tensor>{ga, gb};
                    });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---------------------------------------------------------------------------
// Elementwise unary

inline Tensor scale(const Tensor& x, double c) {
  return Tape::make("scale", detail::map(x.value(), [c](double v) { return c * v; }), {x},
                    [c](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{scale(g, c)};
                    });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor add_scalar(const Tensor& x, double c) {
  return Tape::make("add_scalar", detail::map(x.value(), [c](double v) { return v + c; }), {x},
                    [](const Tensor& g, const Tensor&, const std::vector<char>&) { return std::vector<Tensor>{g}; });
}

inline Tensor operator*(double c, const Tensor& x) { return scale(x, c); }
inline Tensor operator*(const Tensor& x, double c) { return scale(x, c); }
inline Tensor operator+(const Tensor& x, double c) { return add_scalar(x, c); }
inline Tensor operator-(const Tensor& x, double c) { return add_scalar(x, -c); }

inline Tensor exp(const Tensor& x) {
  return Tape::make("exp", detail::map(x.value(), [](double v) { return std::exp(v); }), {x},
                    [](const Tensor& g, const Tensor& out, const std::vector<char>&) {
                      return std::vector<Tensor>{mul(g, out)};
                    });
}

inline Tensor log(const Tensor& x) {
  for (double v : x.value().data())
    if (!(v > 0.0)) throw NonFiniteError("log of non-positive value");
  return Tape::make("log", detail::map(x.value(), [](double v) { return std::log(v); }), {x},
                    [x](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{div(g, x)};
                    });
}

/// Elementwise x^p for a real exponent p.
inline Tensor pow(const Tensor& x, double p) {
  return Tape::make("pow", detail::map(x.value(), [p](double v) { return std::pow(v, p); }), {x},
                    [x, p](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      if (p == 1.0) return std::vector<Tensor>{g};
                      return std::vector<Tensor>{mul(g, scale(pow(x, p - 1.0), p))};
                    });
}

inline Tensor square(const Tensor& x) { return mul(x, x); }
inline Tensor sqrt(const Tensor& x) { return pow(x, 0.5); }

// Piecewise-linear ops backprop through a constant mask; their second derivative is zero.
inline Tensor abs(const Tensor& x) {
  Tensor sign(detail::map(x.value(), [](double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }));
  return Tape::make("abs", detail::map(x.value(), [](double v) { return std::abs(v); }), {x},
                    [sign](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{mul(g, sign)};
                    });
}

inline Tensor relu(const Tensor& x) {
  Tensor mask(detail::map(x.value(), [](double v) { return v > 0 ? 1.0 : 0.0; }));
  return Tape::make("relu", detail::map(x.value(), [](double v) { return v > 0 ? v : 0.0; }), {x},
                    [mask](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{mul(g, mask)};
                    });
}

inline Tensor clamp(const Tensor& x, double lo, double hi) {
  Tensor mask(detail::map(x.value(), [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; }));
  return Tape::make("clamp", detail::map(x.value(), [lo, hi](double v) { return std::clamp(v, lo, hi); }), {x},
                    [mask](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{mul(g, mask)};
                    });
}

// ---------------------------------------------------------------------------
// Reductions

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const Shape xs = x.shape();
  return Tape::make("sum", Array::scalar(s), {x}, [xs](const Tensor& g, const Tensor&, const std::vector<char>&) {
    return std::vector<Tensor>{broadcast_to(g, xs)};
  });
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

/// Sum along `axis`, keeping it as a size-1 dimension.
inline Tensor sum(const Tensor& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  Shape os = x.shape();
  os[axis] = 1;
  Array out(os, 0.0);
  const Array& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += xv[(o * sp.n + k) * sp.inner + i];
  const Shape xs = x.shape();
  return Tape::make("sum_axis", std::move(out), {x}, [xs](const Tensor& g, const Tensor&, const std::vector<char>&) {
    return std::vector<Tensor>{broadcast_to(g, xs)};
  });
}

inline Tensor mean(const Tensor& x, std::size_t axis) {
  return scale(sum(x, axis), 1.0 / static_cast<double>(x.shape().at(axis)));
}

inline Tensor l1_norm(const Tensor& x) { return sum(abs(x)); }
inline Tensor l2_norm(const Tensor& x) { return sqrt(sum(square(x))); }

// ---------------------------------------------------------------------------
// Shape manipulation

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel())
    throw ShapeError("reshape: " + to_string(x.shape()) + " -> " + to_string(shape) + " changes element count");
  const Shape xs = x.shape();
  return Tape::make("reshape", x.value().reshaped(std::move(shape)), {x},
                    [xs](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{reshape(g, xs)};
                    });
}

/// [N, ...] -> [N, prod(...)]
inline Tensor flatten(const Tensor& x) {
  const std::size_t n = x.dim(0);
  return reshape(x, Shape{n, x.numel() / n});
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len);

/// Adjoint of slice: places x at [start, start+len) of a zero tensor with `full` along axis.
inline Tensor embed(const Tensor& x, std::size_t axis, std::size_t start, std::size_t full) {
  const auto sp = detail::split_axis(x.shape(), axis);
  if (start + sp.n > full) throw ShapeError("embed: slice exceeds target extent");
  Shape os = x.shape();
  os[axis] = full;
  Array out(os, 0.0);
  const Array& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>((o * sp.n + k) * sp.inner), sp.inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * full + start + k) * sp.inner));
  const std::size_t len = sp.n;
  return Tape::make("embed", std::move(out), {x},
                    [axis, start, len](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{slice(g, axis, start, len)};
                    });
}

inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t len) {
  const auto sp = detail::split_axis(x.shape(), axis);
  if (len == 0 || start + len > sp.n) throw ShapeError("slice: range out of bounds for " + to_string(x.shape()));
  Shape os = x.shape();
  os[axis] = len;
  Array out(os);
  const Array& xv = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < len; ++k)
      std::copy_n(xv.data().begin() + static_cast<std::ptrdiff_t>((o * sp.n + start + k) * sp.inner), sp.inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * len + k) * sp.inner));
  const std::size_t full = sp.n;
  return Tape::make("slice", std::move(out), {x},
                    [axis, start, full](const Tensor& g, const Tensor&, const std::vector<char>&) {
                      return std::vector<Tensor>{embed(g, axis, start, full)};
                    });
}

inline Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  Shape os = xs[0].shape();
  if (axis >= os.size()) throw ShapeError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& t : xs) {
    Shape s = t.shape();
    if (s.size() != os.size()) throw ShapeError("concat: rank mismatch");
    total += s[axis];
    s[axis] = os[axis];
    if (s != os) throw ShapeError("concat: shapes " + to_string(t.shape()) + " and " + to_string(xs[0].shape()) + " differ off-axis");
  }
  os[axis] = total;
  Array out(os);
  const auto sp = detail::split_axis(os, axis);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& t : xs) {
    offsets.push_back(off);
    const std::size_t n = t.dim(axis);
    const Array& tv = t.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(tv.data().begin() + static_cast<std::ptrdiff_t>(o * n * sp.inner), n * sp.inner,
                  out.data().begin() + static_cast<std::ptrdiff_t>((o * total + off) * sp.inner));
    off += n;
  }
  std::vector<std::size_t> sizes;
  for (const auto& t : xs) sizes.push_back(t.dim(axis));
  return Tape::make("concat", std::move(out), xs,
                    [axis, offsets, sizes](const Tensor& g, const Tensor&, const std::vector<char>& need) {
                      std::vector<Tensor> gs(sizes.size());
                      for (std::size_t i = 0; i < sizes.size(); ++i)
                        if (need[i]) gs[i] = slice(g, axis, offsets[i], sizes[i]);
                      return gs;
                    });
}

// ---------------------------------------------------------------------------
// Matrix product

/// op(a) @ op(b) for 2-D tensors, op = transpose when the flag is set.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false) {
  detail::require_same_rank2("matmul", a);
  detail::require_same_rank2("matmul", b);
  const std::size_t m = ta ? a.dim(1) : a.dim(0);
  const std::size_t k = ta ? a.dim(0) : a.dim(1);
  const std::size_t kb = tb ? b.dim(1) : b.dim(0);
  const std::size_t n = tb ? b.dim(0) : b.dim(1);
  if (k != kb)
    throw ShapeError("matmul: inner dimensions differ for " + to_string(a.shape()) + (ta ? "^T" : "") + " x " +
                     to_string(b.shape()) + (tb ? "^T" : ""));
  Array out(Shape{m, n}, 0.0);
  const double* A = a.value().data().data();
  const double* B = b.value().data().data();
  double* C = out.data().data();
  const std::size_t lda = a.dim(1), ldb = b.dim(1);
  if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double* arow = A + i * lda;
        const double* brow = B + j * ldb;
        double s = 0.0;
        for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
        C[i * n + j] = s;
      }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = ta ? A[p * lda + i] : A[i * lda + p];
        if (av == 0.0) continue;
        if (!tb) {
          const double* brow = B + p * ldb;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        } else {
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * B[j * ldb + p];
        }
      }
    }
  }
  return Tape::make("matmul", std::move(out), {a, b},
                    [a, b, ta, tb](const Tensor& g, const Tensor&, const std::vector<char>& need) {
                      Tensor ga, gb;
                      if (!ta && !tb) {
                        if (need[0]) ga = matmul(g, b, false, true);
                        if (need[1]) gb = matmul(a, g, true, false);
                      } else if (ta && !tb) {
                        if (need[0]) ga = matmul(b, g, false, true);
                        if (need[1]) gb = matmul(a, g, false, false);
                      } else if (!ta && tb) {
                        if (need[0]) ga = matmul(g, b, false, false);
                        if (need[1]) gb = matmul(g, a, true, false);
                      } else {
                        if (need[0]) ga = matmul(b, g, true, true);
                        if (need[1]) gb = matmul(g, a, true, true);
                      }
                      return std::vector<Tensor>{ga, gb};
                    });
}

// ---------------------------------------------------------------------------
// Softmax family (last axis of a 2-D tensor)

inline Tensor log_softmax(const Tensor& x) {
  detail::require_same_rank2("log_softmax", x);
  const std::size_t n = x.dim(0), c = x.dim(1);
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, xv[i * c + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(xv[i * c + j] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] - lse;
  }
  return Tape::make("log_softmax", std::move(out), {x}, [](const Tensor& g, const Tensor& out, const std::vector<char>&) {
    return std::vector<Tensor>{sub(g, mul(exp(out), sum(g, 1)))};
  });
}

inline Tensor softmax(const Tensor& x) {
  detail::require_same_rank2("softmax", x);
  Array out = log_softmax(detach(x)).value();
  for (auto& v : out.data()) v = std::exp(v);
  return Tape::make("softmax", std::move(out), {x}, [](const Tensor& g, const Tensor& out, const std::vector<char>&) {
    return std::vector<Tensor>{mul(out, sub(g, sum(mul(g, out), 1)))};
  });
}

enum class Reduction { kMean, kSum, kNone };

/// Cross-entropy of integer labels against logits [N, C].
inline Tensor cross_entropy(const Tensor& logits, std::span<const int> labels, Reduction red = Reduction::kMean) {
  detail::require_same_rank2("cross_entropy", logits);
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) + " rows");
  Array onehot(logits.shape(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw ShapeError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(c) + ")");
    onehot[i * c + static_cast<std::size_t>(labels[i])] = 1.0;
  }
  Tensor picked = mul(log_softmax(logits), Tensor(std::move(onehot)));
  switch (red) {
    case Reduction::kSum:
      return neg(sum(picked));
    case Reduction::kNone:
      return reshape(neg(sum(picked, 1)), Shape{n});
    case Reduction::kMean:
    default:
      return scale(sum(picked), -1.0 / static_cast<double>(n));
  }
}

/// Row-wise argmax, lowest index wins ties.
inline std::vector<int> argmax_rows(const Array& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j)
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace oodkit
