// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Cell-based search space. A cell has two input nodes (0, 1) and n ordered
// intermediate nodes; node j receives one edge from every earlier node, and
// every edge carries all candidate ops mixed by per-edge weights:
//
//   z_j = sum_{i<j} sum_k s_k^(i,j) o_k(z_i),   s^(i,j) = softmax(alpha^(i,j))
//
// The cell output concatenates the intermediate nodes along channels. The
// network is stem -> normal cell -> reduce cell -> global pool -> linear.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "oodkit/autodiff.hpp"
#include "oodkit/nn/layers.hpp"

namespace oodkit::nas {

enum Op : int { kZero = 0, kSkip, kSepConv, kDilConv, kMaxPool, kAvgPool };
inline constexpr std::size_t kNumOps = 6;
inline constexpr std::array<const char*, kNumOps> kOpNames{"zero", "skip", "sep_conv_3x3", "dil_conv_3x3",
                                                           "max_pool_3x3", "avg_pool_3x3"};

inline int op_from_name(const std::string& s) {
  for (std::size_t k = 0; k < kNumOps; ++k)
    if (s == kOpNames[k]) return static_cast<int>(k);
  throw FormatError("unknown op '" + s + "'");
}

struct CellSpec {
  std::size_t n_nodes = 4;  // intermediate nodes
  std::size_t channels = 8;

  std::size_t n_edges() const { return n_nodes * (n_nodes + 3) / 2; }
  bool operator==(const CellSpec&) const = default;
};

inline void validate(const CellSpec& s) {
  if (s.n_nodes < 1) throw ConfigError("n_nodes", "must be >= 1");
  if (s.channels < 1) throw ConfigError("channels", "must be >= 1");
}

/// Index of edge (i -> j) for intermediate node j >= 2 and source i < j.
inline std::size_t edge_index(std::size_t i, std::size_t j) { return (j - 2) * (j + 1) / 2 + i; }

// ---- architecture parameters ------------------------------------------------

struct ArchParams {
  Tensor normal;  // [n_edges, kNumOps] logits
  Tensor reduce;

  Tensor& cell(bool is_reduce) { return is_reduce ? reduce : normal; }
  const Tensor& cell(bool is_reduce) const { return is_reduce ? reduce : normal; }
  nn::ParamList params() { return {&normal, &reduce}; }
};

inline ArchParams init_arch(const CellSpec& spec, double scale = 0.0, std::uint64_t seed = 0) {
  Rng rng(seed, "arch_init");
  ArchParams a;
  for (auto* t : {&a.normal, &a.reduce}) {
    Array v(Shape{spec.n_edges(), kNumOps});
    for (auto& x : v.data()) x = scale == 0.0 ? 0.0 : rng.normal(0.0, scale);
    *t = Tensor(std::move(v));
  }
  return a;
}

/// Per-edge softmax over op logits.
inline Tensor relax(const Tensor& logits) {
  if (logits.rank() != 2 || logits.dim(1) != kNumOps) throw ShapeError("relax: expected [edges, ops] logits");
  return softmax(logits);
}

// ---- discrete architectures -------------------------------------------------

struct Choice {
  std::size_t source = 0;
  int op = kSkip;
  bool operator==(const Choice&) const = default;
};

/// For each intermediate node, exactly two incoming edges, ordered by source.
using DiscreteCell = std::vector<std::array<Choice, 2>>;

struct DiscreteArch {
  DiscreteCell normal;
  DiscreteCell reduce;

  const DiscreteCell& cell(bool is_reduce) const { return is_reduce ? reduce : normal; }
  bool operator==(const DiscreteArch&) const = default;
};

/// Empty string when valid, otherwise the first violation.
inline std::string check(const DiscreteArch& d, const CellSpec& spec) {
  for (bool r : {false, true}) {
    const auto& c = d.cell(r);
    const std::string name = r ? "reduce" : "normal";
    if (c.size() != spec.n_nodes) return name + ": wrong node count";
    for (std::size_t n = 0; n < c.size(); ++n) {
      const std::size_t j = n + 2;
      const auto& e = c[n];
      if (e[0].source >= j || e[1].source >= j) return name + ": edge into node " + std::to_string(j) + " is not from an earlier node";
      if (e[0].source >= e[1].source) return name + ": node " + std::to_string(j) + " needs two distinct sources in order";
      for (const auto& ch : e)
        if (ch.op <= kZero || ch.op >= static_cast<int>(kNumOps)) return name + ": invalid op";
    }
  }
  return {};
}

/// Per edge: argmax op excluding zero. Per node: the two incoming edges whose
/// chosen op has the largest weight. Ties go to the lower (edge, op) index.
inline DiscreteCell discretize_cell(const Array& w, const CellSpec& spec) {
  DiscreteCell out;
  for (std::size_t j = 2; j < spec.n_nodes + 2; ++j) {
    struct Cand {
      std::size_t source;
      int op;
      double weight;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < j; ++i) {
      const std::size_t e = edge_index(i, j);
      int best = kSkip;
      for (int k = kSkip + 1; k < static_cast<int>(kNumOps); ++k)
        if (w[e * kNumOps + k] > w[e * kNumOps + best]) best = k;
      cands.push_back({i, best, w[e * kNumOps + best]});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.weight > b.weight; });
    Choice a{cands[0].source, cands[0].op}, b{cands[1].source, cands[1].op};
    if (a.source > b.source) std::swap(a, b);
    out.push_back({a, b});
  }
  return out;
}

inline DiscreteArch discretize(const ArchParams& arch, const CellSpec& spec) {
  return {discretize_cell(relax(detach(arch.normal)).value(), spec),
          discretize_cell(relax(detach(arch.reduce)).value(), spec)};
}

/// Mixture weights that select exactly the ops of `cell`: one-hot on chosen
/// edges, all zero elsewhere.
inline Array one_hot_weights(const DiscreteCell& cell, const CellSpec& spec) {
  Array w(Shape{spec.n_edges(), kNumOps}, 0.0);
  for (std::size_t n = 0; n < cell.size(); ++n)
    for (const auto& ch : cell[n]) w[edge_index(ch.source, n + 2) * kNumOps + static_cast<std::size_t>(ch.op)] = 1.0;
  return w;
}

/// Logits whose softmax puts all but ~e^-40 of each edge's mass on the chosen op.
inline ArchParams arch_from_discrete(const DiscreteArch& d, const CellSpec& spec) {
  ArchParams a;
  for (bool r : {false, true}) {
    Array w = one_hot_weights(d.cell(r), spec);
    for (auto& v : w.data()) v *= 40.0;
    a.cell(r) = Tensor(std::move(w));
  }
  return a;
}

inline DiscreteArch random_arch(const CellSpec& spec, Rng& rng) {
  DiscreteArch d;
  for (auto* c : {&d.normal, &d.reduce}) {
    for (std::size_t j = 2; j < spec.n_nodes + 2; ++j) {
      std::size_t s0 = rng.below(j), s1 = rng.below(j - 1);
      if (s1 >= s0) ++s1;
      Choice a{s0, static_cast<int>(1 + rng.below(kNumOps - 1))};
      Choice b{s1, static_cast<int>(1 + rng.below(kNumOps - 1))};
      if (a.source > b.source) std::swap(a, b);
      c->push_back({a, b});
    }
  }
  return d;
}

inline nlohmann::json to_json(const DiscreteArch& d) {
  nlohmann::json j;
  for (bool r : {false, true}) {
    nlohmann::json edges = nlohmann::json::array();
    const auto& c = d.cell(r);
    for (std::size_t n = 0; n < c.size(); ++n)
      for (const auto& ch : c[n]) edges.push_back({n + 2, ch.source, kOpNames[static_cast<std::size_t>(ch.op)]});
    j[r ? "reduce" : "normal"] = edges;
  }
  return j;
}

inline DiscreteArch arch_from_json(const nlohmann::json& j, const CellSpec& spec) {
  DiscreteArch d;
  for (bool r : {false, true}) {
    auto& c = r ? d.reduce : d.normal;
    c.assign(spec.n_nodes, {});
    std::vector<int> seen(spec.n_nodes, 0);
    for (const auto& e : j.at(r ? "reduce" : "normal")) {
      const auto node = e.at(0).get<std::size_t>();
      if (node < 2 || node >= spec.n_nodes + 2) throw FormatError("arch: node index out of range");
      int& k = seen[node - 2];
      if (k >= 2) throw FormatError("arch: more than two edges into node " + std::to_string(node));
      c[node - 2][static_cast<std::size_t>(k++)] = {e.at(1).get<std::size_t>(), op_from_name(e.at(2).get<std::string>())};
    }
    for (auto& pair : c)
      if (pair[0].source > pair[1].source) std::swap(pair[0], pair[1]);
  }
  if (auto err = check(d, spec); !err.empty()) throw FormatError("arch: " + err);
  return d;
}

// ---- network -------------------------------------------------------------------

/// Parameters of the candidate ops on one edge. Parameter-free ops have none.
struct EdgeOps {
  nn::Conv2d sep_dw, sep_pw;  // depthwise 3x3, pointwise 1x1
  nn::Conv2d dil_dw, dil_pw;  // depthwise 3x3 dilation 2, pointwise 1x1
  std::size_t stride = 1;

  EdgeOps() = default;
  EdgeOps(std::size_t c, std::size_t stride_, Rng& rng) : stride(stride_) {
    sep_dw = nn::Conv2d(c, c, 3, ConvParams{stride, 1, 1, c}, rng, false);
    sep_pw = nn::Conv2d(c, c, 1, ConvParams{}, rng);
    dil_dw = nn::Conv2d(c, c, 3, ConvParams{stride, 2, 2, c}, rng, false);
    dil_pw = nn::Conv2d(c, c, 1, ConvParams{}, rng);
  }

  Tensor apply(int op, const Tensor& x) const {
    switch (op) {
      case kSkip:
        return stride == 1 ? x : avg_pool2d(x, PoolParams{1, stride, 0});
      case kSepConv:
        return sep_pw(sep_dw(relu(x)));
      case kDilConv:
        return dil_pw(dil_dw(relu(x)));
      case kMaxPool:
        return max_pool2d(x, PoolParams{3, stride, 1});
      case kAvgPool:
        return avg_pool2d(x, PoolParams{3, stride, 1});
      default:
        throw Error("EdgeOps::apply: op " + std::to_string(op) + " has no forward");
    }
  }

  void collect(nn::ParamList& out, int op) {
    if (op == kSepConv) sep_dw.collect(out), sep_pw.collect(out);
    if (op == kDilConv) dil_dw.collect(out), dil_pw.collect(out);
  }
  void collect(nn::ParamList& out) {
    collect(out, kSepConv);
    collect(out, kDilConv);
  }
};

struct Cell {
  bool is_reduce = false;
  nn::Conv2d pre0, pre1;  // 1x1 convs bringing both inputs to `channels`
  std::vector<EdgeOps> edges;

  Cell() = default;
  Cell(const CellSpec& spec, std::size_t in0, std::size_t in1, bool reduce, Rng& rng) : is_reduce(reduce) {
    const std::size_t c = spec.channels;
    pre0 = nn::Conv2d(in0, c, 1, ConvParams{}, rng);
    pre1 = nn::Conv2d(in1, c, 1, ConvParams{}, rng);
    for (std::size_t j = 2; j < spec.n_nodes + 2; ++j)
      for (std::size_t i = 0; i < j; ++i) edges.emplace_back(c, reduce && i < 2 ? 2 : 1, rng);
  }

  void collect_shared(nn::ParamList& out) {
    pre0.collect(out);
    pre1.collect(out);
  }
};

/// Sums a list of terms left to right; null terms are skipped.
inline Tensor accumulate(const Tensor& acc, const Tensor& term) { return acc.defined() ? add(acc, term) : term; }

/// Mixture forward of one cell. `w` is [n_edges, kNumOps]; any weights are
/// accepted (softmax output during search, one-hot masks for checks). The
/// zero op contributes nothing and is not evaluated.
inline std::vector<Tensor> node_forward(const Cell& cell, const Tensor& w, const Tensor& s0, const Tensor& s1,
                                        std::size_t n_nodes) {
  if (w.rank() != 2 || w.dim(0) != cell.edges.size() || w.dim(1) != kNumOps)
    throw ShapeError("node_forward: weights must be [" + std::to_string(cell.edges.size()) + ", 6]");
  std::vector<Tensor> nodes{s0, s1};
  for (std::size_t j = 2; j < n_nodes + 2; ++j) {
    Tensor zj;
    for (std::size_t i = 0; i < j; ++i) {
      const std::size_t e = edge_index(i, j);
      Tensor edge;
      for (int k = kSkip; k < static_cast<int>(kNumOps); ++k) {
        const Tensor wk = reshape(slice(slice(w, 0, e, 1), 1, static_cast<std::size_t>(k), 1), Shape{1, 1, 1, 1});
        edge = accumulate(edge, mul(wk, cell.edges[e].apply(k, nodes[i])));
      }
      zj = accumulate(zj, edge);
    }
    nodes.push_back(zj);
  }
  return nodes;
}

/// Forward of the cell restricted to the chosen edges.
inline std::vector<Tensor> discrete_node_forward(const Cell& cell, const DiscreteCell& d, const Tensor& s0,
                                                 const Tensor& s1) {
  std::vector<Tensor> nodes{s0, s1};
  for (std::size_t n = 0; n < d.size(); ++n) {
    const std::size_t j = n + 2;
    Tensor zj;
    for (const auto& ch : d[n]) zj = accumulate(zj, cell.edges[edge_index(ch.source, j)].apply(ch.op, nodes[ch.source]));
    nodes.push_back(zj);
  }
  return nodes;
}

struct Supernet {
  CellSpec spec;
  nn::Conv2d stem;
  std::array<Cell, 2> cells;  // normal, reduce
  nn::Linear head;

  std::size_t cell_out_channels() const { return spec.n_nodes * spec.channels; }

  // Cell inputs: the normal cell sees (stem, stem); the reduce cell (stem, normal).
  template <class CellFn>
  Tensor forward_with(const Tensor& x, CellFn&& run_cell) const {
    const Tensor s = stem(x);
    const Tensor c0 = run_cell(0, cells[0].pre0(s), cells[0].pre1(s));
    const Tensor c1 = run_cell(1, cells[1].pre0(s), cells[1].pre1(relu(c0)));
    return head(global_avg_pool(relu(c1)));
  }

  /// Logits under explicit mixture weights for the normal and reduce cells.
  Tensor forward(const Tensor& x, const Tensor& w_normal, const Tensor& w_reduce) const {
    return forward_with(x, [&](int c, const Tensor& a, const Tensor& b) {
      auto nodes = node_forward(cells[c], c ? w_reduce : w_normal, a, b, spec.n_nodes);
      return concat(std::vector<Tensor>(nodes.begin() + 2, nodes.end()), 1);
    });
  }

  Tensor forward(const Tensor& x, const ArchParams& arch) const {
    return forward(x, relax(arch.normal), relax(arch.reduce));
  }

  Tensor forward(const Tensor& x, const DiscreteArch& d) const {
    return forward_with(x, [&](int c, const Tensor& a, const Tensor& b) {
      auto nodes = discrete_node_forward(cells[c], d.cell(c == 1), a, b);
      return concat(std::vector<Tensor>(nodes.begin() + 2, nodes.end()), 1);
    });
  }

  /// All of omega.
  nn::ParamList params() {
    nn::ParamList out;
    stem.collect(out);
    for (auto& c : cells) {
      c.collect_shared(out);
      for (auto& e : c.edges) e.collect(out);
    }
    head.collect(out);
    return out;
  }

  /// The subset of omega used by a discrete architecture.
  nn::ParamList params(const DiscreteArch& d) {
    nn::ParamList out;
    stem.collect(out);
    for (std::size_t c = 0; c < 2; ++c) {
      cells[c].collect_shared(out);
      const auto& dc = d.cell(c == 1);
      for (std::size_t n = 0; n < dc.size(); ++n)
        for (const auto& ch : dc[n]) cells[c].edges[edge_index(ch.source, n + 2)].collect(out, ch.op);
    }
    head.collect(out);
    return out;
  }
};

inline Supernet make_supernet(const CellSpec& spec, std::size_t in_channels, std::size_t n_classes,
                              std::uint64_t seed) {
  validate(spec);
  Rng rng(seed, "supernet_init");
  Supernet net;
  net.spec = spec;
  net.stem = nn::Conv2d(in_channels, spec.channels, 3, ConvParams{1, 1, 1, 1}, rng);
  net.cells[0] = Cell(spec, spec.channels, spec.channels, false, rng);
  net.cells[1] = Cell(spec, spec.channels, net.cell_out_channels(), true, rng);
  net.head = nn::Linear(net.cell_out_channels(), n_classes, rng);
  return net;
}

}  // namespace oodkit::nas
