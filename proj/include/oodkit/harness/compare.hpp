// Copyright 2026 The oodkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Mean and standard deviation of final test accuracy per method over seeds.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include "oodkit/core/csv.hpp"
#include "oodkit/harness/run.hpp"

namespace oodkit::harness {

struct CompareRow {
  std::string method;
  std::vector<std::uint64_t> seeds;
  std::vector<double> values;
  double mean = 0;
  double std = 0;  // sample standard deviation; 0 for a single run
};

/// Groups reports by method. Requires at least two reports, one dataset, and
/// the same seed set for every method.
inline std::vector<CompareRow> compare(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw Error("compare: no reports");
  if (reports.size() < 2) throw Error("compare: need at least two reports");
  const auto& ds = reports.front().dataset;
  std::vector<CompareRow> rows;
  for (const auto& r : reports) {
    if (r.dataset != ds)
      throw Error("compare: mismatched datasets (" + ds.dump() + " vs " + r.dataset.dump() + ")");
    if (!r.test_acc) throw Error("compare: report for " + r.method() + " has no final test accuracy");
    auto it = std::find_if(rows.begin(), rows.end(), [&](const CompareRow& c) { return c.method == r.method(); });
    if (it == rows.end()) it = rows.insert(rows.end(), CompareRow{r.method(), {}, {}, 0, 0});
    it->seeds.push_back(r.seed());
    it->values.push_back(*r.test_acc);
  }
  const std::set<std::uint64_t> seeds(rows.front().seeds.begin(), rows.front().seeds.end());
  for (auto& row : rows) {
    if (std::set<std::uint64_t>(row.seeds.begin(), row.seeds.end()) != seeds)
      throw Error("compare: methods were run on different seed sets");
    const double n = static_cast<double>(row.values.size());
    for (double v : row.values) row.mean += v / n;
    double ss = 0;
    for (double v : row.values) ss += (v - row.mean) * (v - row.mean);
    row.std = row.values.size() > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  }
  return rows;
}

inline void write_compare_csv(std::ostream& os, const std::vector<CompareRow>& rows) {
  CsvWriter w(os);
  w.row({"method", "n", "mean_test_acc", "std_test_acc"});
  for (const auto& r : rows)
    w.row({r.method, format_number(r.values.size()), format_number(r.mean), format_number(r.std)});
}

inline void write_compare_markdown(std::ostream& os, const std::vector<CompareRow>& rows) {
  auto pct = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
    return std::string(buf);
  };
  os << "| method | seeds | test accuracy (%) |\n|---|---|---|\n";
  for (const auto& r : rows) os << "| " << r.method << " | " << r.values.size() << " | " << pct(r.mean) << " ± "
                                << pct(r.std) << " |\n";
}

}  // namespace oodkit::harness
