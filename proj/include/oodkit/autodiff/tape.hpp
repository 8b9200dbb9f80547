// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode tape. A Tape records every operation whose inputs are tracked
// while recording is on; grad() walks it backwards. Backward rules are written
// with the same differentiable ops, so with create_graph the gradients are
// recorded too and can be differentiated again (double backprop).
//
// A tape lives for one training step. Tensors hold a raw pointer to their
// tape, so they must not outlive it (nn::ParamBinding detaches parameters when
// the step ends).

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "oodkit/core/array.hpp"
#include "oodkit/core/error.hpp"

namespace oodkit {

class Tape;
namespace detail {
struct TapeAccess;
}

/// Value plus an optional node on a tape. Untracked tensors are constants.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Array value) : value_(std::make_shared<const Array>(std::move(value))) {}
  explicit Tensor(std::shared_ptr<const Array> value) : value_(std::move(value)) {}

  static Tensor scalar(double v) { return Tensor(Array::scalar(v)); }

  bool defined() const noexcept { return value_ != nullptr; }
  const Array& value() const { return *value_; }
  const std::shared_ptr<const Array>& storage() const noexcept { return value_; }
  const Shape& shape() const { return value_->shape(); }
  std::size_t rank() const { return value_->rank(); }
  std::size_t dim(std::size_t i) const { return value_->dim(i); }
  std::size_t numel() const { return value_->numel(); }
  double item() const { return value_->item(); }
  double operator[](std::size_t i) const { return (*value_)[i]; }

  bool tracked() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }

 private:
  friend class Tape;
  std::shared_ptr<const Array> value_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

inline Tensor detach(const Tensor& t) { return Tensor(t.storage()); }

/// Backward rule: given d(root)/d(out) and the op's output, return one
/// gradient per input (undefined entries mean zero). `need[i]` is false when
/// input i does not lead to any requested leaf, so its gradient may be skipped.
using BackwardFn =
    std::function<std::vector<Tensor>(const Tensor& grad, const Tensor& out, const std::vector<char>& need)>;

class Tape {
 public:
  static constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor leaf(Array value) { return leaf(std::make_shared<const Array>(std::move(value))); }
  Tensor leaf(const Tensor& t) { return leaf(t.storage()); }
  Tensor leaf(std::shared_ptr<const Array> value) {
    nodes_.push_back(Node{value, {}, nullptr});
    return handle(std::move(value), nodes_.size() - 1);
  }

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Creates the result tensor of an op. Records a node when some input is
  /// tracked and the tape is recording; otherwise the result is a constant.
  static Tensor make(const char* op, Array out, std::vector<Tensor> inputs, BackwardFn fn) {
    if (!out.all_finite()) throw NonFiniteError(std::string("non-finite value produced by ") + op);
    Tape* tape = nullptr;
    for (const auto& in : inputs) {
      if (!in.tracked()) continue;
      if (tape && tape != in.tape()) throw Error(std::string(op) + ": inputs live on different tapes");
      tape = in.tape();
    }
    auto value = std::make_shared<const Array>(std::move(out));
    if (!tape || !tape->recording_) return Tensor(std::move(value));
    std::vector<std::size_t> parents;
    parents.reserve(inputs.size());
    for (const auto& in : inputs) parents.push_back(in.tracked() ? in.node() : kNoParent);
    tape->nodes_.push_back(Node{value, std::move(parents), std::move(fn)});
    return tape->handle(std::move(value), tape->nodes_.size() - 1);
  }

 private:
  friend class NoGradGuard;
  friend struct detail::TapeAccess;

  struct Node {
    std::shared_ptr<const Array> value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
  };

  Tensor handle(std::shared_ptr<const Array> value, std::size_t id) {
    Tensor t(std::move(value));
    t.tape_ = this;
    t.node_ = id;
    return t;
  }

  // deque: backward rules append nodes while a rule stored in the deque runs.
  std::deque<Node> nodes_;
  bool recording_ = true;
};

/// Suspends recording on a tape for the guard's lifetime.
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& tape, bool disable = true) : tape_(tape), prev_(tape.recording_) {
    if (disable) tape_.recording_ = false;
  }
  ~NoGradGuard() { tape_.recording_ = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape& tape_;
  bool prev_;
};

}  // namespace oodkit
