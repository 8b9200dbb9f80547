// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "oodkit/autodiff/ops.hpp"
#include "oodkit/autodiff/tape.hpp"

namespace oodkit {

namespace detail {
struct TapeAccess {
  static auto& nodes(Tape& t) { return t.nodes_; }
  static bool& recording(Tape& t) { return t.recording_; }
  static Tensor handle(Tape& t, std::shared_ptr<const Array> v, std::size_t id) { return t.handle(std::move(v), id); }
};
}  // namespace detail

/// d(root)/d(leaf) for each leaf. Leaves the root does not depend on (and
/// untracked leaves) get zero gradients. With create_graph the returned
/// gradients are recorded on the tape and can be differentiated again.
inline std::vector<Tensor> grad(const Tensor& root, const std::vector<Tensor>& leaves, bool create_graph = false) {
  using detail::TapeAccess;
  if (!root.defined() || root.numel() != 1)
    throw ShapeError("grad: root must be a scalar, got shape " +
                     (root.defined() ? to_string(root.shape()) : std::string("<undefined>")));

  std::vector<Tensor> result;
  result.reserve(leaves.size());
  auto zeros_like = [](const Tensor& t) { return Tensor(Array(t.shape(), 0.0)); };

  if (!root.tracked()) {
    for (const auto& l : leaves) result.push_back(zeros_like(l));
    return result;
  }
  Tape& tape = *root.tape();
  auto& nodes = TapeAccess::nodes(tape);
  for (const auto& l : leaves)
    if (l.tracked() && l.tape() != &tape) throw Error("grad: leaf lives on a different tape than the root");

  // needed[i]: node i has a requested leaf among its ancestors (or is one).
  const std::size_t n = root.node() + 1;
  std::vector<char> needed(n, 0), is_leaf(n, 0);
  for (const auto& l : leaves)
    if (l.tracked() && l.node() < n) needed[l.node()] = is_leaf[l.node()] = 1;
  for (std::size_t i = 0; i < n; ++i) {
    if (needed[i]) continue;
    for (auto p : nodes[i].parents)
      if (p != Tape::kNoParent && needed[p]) {
        needed[i] = 1;
        break;
      }
  }

  std::vector<Tensor> adj(n);
  adj[root.node()] = Tensor(Array(root.shape(), 1.0));

  NoGradGuard guard(tape, !create_graph);
  if (create_graph) TapeAccess::recording(tape) = true;

  for (std::size_t i = n; i-- > 0;) {
    if (!adj[i].defined() || !needed[i]) continue;
    const auto& node = nodes[i];
    if (!node.backward) continue;
    std::vector<char> need(node.parents.size(), 0);
    bool any = false;
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      const auto p = node.parents[k];
      need[k] = (p != Tape::kNoParent && needed[p]) ? 1 : 0;
      any = any || need[k];
    }
    if (!any) continue;
    const Tensor out = TapeAccess::handle(tape, node.value, i);
    auto grads = node.backward(adj[i], out, need);
    for (std::size_t k = 0; k < node.parents.size(); ++k) {
      if (!need[k] || k >= grads.size() || !grads[k].defined()) continue;
      const auto p = node.parents[k];
      adj[p] = adj[p].defined() ? add(adj[p], grads[k]) : grads[k];
    }
    if (!create_graph && !is_leaf[i]) adj[i] = Tensor();
  }

  for (const auto& l : leaves) {
    if (l.tracked() && l.node() < n && adj[l.node()].defined())
      result.push_back(adj[l.node()]);
    else
      result.push_back(zeros_like(l));
  }
  return result;
}

}  // namespace oodkit
