// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "oodkit/autodiff.hpp"
#include "oodkit/core/rng.hpp"

namespace oodkit::nn {

using ParamList = std::vector<Tensor*>;

inline Array uniform_array(Shape shape, double bound, Rng& rng) {
  Array a(std::move(shape));
  for (auto& v : a.data()) v = rng.uniform(-bound, bound);
  return a;
}

/// y = x W + b, W stored as [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    weight = Tensor(uniform_array(Shape{in, out}, bound, rng));
    bias = Tensor(uniform_array(Shape{out}, bound, rng));
  }

  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
  void collect(ParamList& out) { out.insert(out.end(), {&weight, &bias}); }
};

struct Conv2d {
  Tensor weight;  // [out, in/groups, k, k]
  Tensor bias;    // [1, out, 1, 1]; undefined when built without bias
  ConvParams params;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t k, const ConvParams& p, Rng& rng, bool with_bias = true)
      : params(p) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in / p.groups * k * k));
    weight = Tensor(uniform_array(Shape{out, in / p.groups, k, k}, bound, rng));
    if (with_bias) bias = Tensor(uniform_array(Shape{1, out, 1, 1}, bound, rng));
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = conv2d(x, weight, params);
    return bias.defined() ? add(y, bias) : y;
  }
  void collect(ParamList& out) {
    out.push_back(&weight);
    if (bias.defined()) out.push_back(&bias);
  }
};

struct ConvTranspose2d {
  Tensor weight;  // [in, out, k, k]
  Tensor bias;    // [1, out, 1, 1]
  ConvParams params;
  std::size_t output_padding = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in, std::size_t out, std::size_t k, const ConvParams& p, std::size_t out_pad, Rng& rng)
      : params(p), output_padding(out_pad) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(out * k * k));
    weight = Tensor(uniform_array(Shape{in, out, k, k}, bound, rng));
    bias = Tensor(uniform_array(Shape{1, out, 1, 1}, bound, rng));
  }

  Tensor operator()(const Tensor& x) const { return add(conv_transpose2d(x, weight, params, output_padding), bias); }
  void collect(ParamList& out) { out.insert(out.end(), {&weight, &bias}); }
};

inline std::size_t count_params(const ParamList& ps) {
  std::size_t n = 0;
  for (const auto* p : ps) n += p->numel();
  return n;
}

inline std::vector<Array> snapshot(const ParamList& ps) {
  std::vector<Array> out;
  out.reserve(ps.size());
  for (const auto* p : ps) out.push_back(p->value());
  return out;
}

inline void restore(const ParamList& ps, const std::vector<Array>& values) {
  if (values.size() != ps.size()) throw ShapeError("restore: parameter count mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    if (values[i].shape() != ps[i]->shape()) throw ShapeError("restore: parameter shape mismatch");
    *ps[i] = Tensor(values[i]);
  }
}

/// Rebinds a parameter list as leaves of `tape` and back to constants when
/// the binding goes out of scope.
class ParamBinding {
 public:
  ParamBinding(Tape& tape, ParamList params) : params_(std::move(params)) {
    leaves_.reserve(params_.size());
    for (auto* p : params_) {
      *p = tape.leaf(*p);
      leaves_.push_back(*p);
    }
  }
  ~ParamBinding() {
    for (auto* p : params_) *p = detach(*p);
  }
  ParamBinding(const ParamBinding&) = delete;
  ParamBinding& operator=(const ParamBinding&) = delete;

  const std::vector<Tensor>& leaves() const { return leaves_; }
  const ParamList& params() const { return params_; }

 private:
  ParamList params_;
  std::vector<Tensor> leaves_;
};

/// p <- p - lr * g. A negative lr gives an ascent step.
inline void sgd_step(const ParamList& params, const std::vector<Tensor>& grads, double lr, const char* stage = "sgd") {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: gradient count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Array next = params[i]->value();
    const Array& g = grads[i].value();
    for (std::size_t k = 0; k < next.numel(); ++k) next[k] -= lr * g[k];
    if (!next.all_finite()) throw DivergenceError(stage, "parameter update produced non-finite values");
    *params[i] = Tensor(std::move(next));
  }
}

/// Heavy-ball SGD: v <- mu v + g, p <- p - lr v. With mu = 0 this is sgd_step.
class MomentumSgd {
 public:
  explicit MomentumSgd(double momentum = 0.0) : mu_(momentum) {}

  void step(const ParamList& params, const std::vector<Tensor>& grads, double lr, const char* stage = "sgd") {
    if (mu_ == 0.0) return sgd_step(params, grads, lr, stage);
    if (grads.size() != params.size()) throw ShapeError("MomentumSgd: gradient count mismatch");
    if (velocity_.empty())
      for (const auto* p : params) velocity_.emplace_back(p->shape(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Array& v = velocity_[i];
      const Array& g = grads[i].value();
      Array next = params[i]->value();
      for (std::size_t k = 0; k < next.numel(); ++k) {
        v[k] = mu_ * v[k] + g[k];
        next[k] -= lr * v[k];
      }
      if (!next.all_finite()) throw DivergenceError(stage, "parameter update produced non-finite values");
      *params[i] = Tensor(std::move(next));
    }
  }

 private:
  double mu_;
  std::vector<Array> velocity_;
};

}  // namespace oodkit::nn
