// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Published figures the perf model is held to, laid out cell by cell with
// the model value beside each target.
#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace mxsim {

enum class ToleranceKind {
  kRelative,  // |model / target - 1| <= tolerance
  kAbsolute,  // |model - target| <= tolerance
};

struct TableCell {
  std::string row;     // workload or system
  std::string column;  // quantity
  double model = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  ToleranceKind kind = ToleranceKind::kRelative;
  // Soft cells are reported but never fail the table.
  bool soft = false;

  [[nodiscard]] double relative_deviation() const;
  [[nodiscard]] bool within() const;
};

struct TableReport {
  std::string id;  // t1, t3, t5 or t8
  std::vector<TableCell> cells;

  // Every hard cell within tolerance.
  [[nodiscard]] bool passed() const;
  void write_csv(std::ostream& out) const;
};

// Throws std::invalid_argument for an unknown id.
TableReport reproduce_table(const std::string& id);
const std::vector<std::string>& table_ids();

}  // namespace mxsim
