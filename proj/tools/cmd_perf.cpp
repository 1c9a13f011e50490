// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Throughput sweeps and the published-table reproductions.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "commands.hpp"
#include "manifest.hpp"
#include "mxsim/parallel.hpp"
#include "mxsim/perf_model.hpp"
#include "mxsim/perf_tables.hpp"

namespace fs = std::filesystem;

namespace mxsim::cli {
namespace {

// A built-in name or a JSON file.
SystemConfig resolve_system(const std::string& name_or_path, RunManifest& manifest) {
  if (name_or_path == "base") return base_system();
  if (name_or_path == "large") return large_system();
  if (!fs::exists(name_or_path)) throw UsageError("--system must be base, large or a JSON file: " + name_or_path);
  manifest.add_config("system", name_or_path);
  return load_system_config(name_or_path);
}

Workload resolve_workload(const std::string& name_or_path, const SystemConfig& s, RunManifest& manifest) {
  if (name_or_path.empty()) return sizing_workload(s, 1);
  if (fs::exists(name_or_path)) {
    manifest.add_config("workload", name_or_path);
    return load_workload(name_or_path);
  }
  try {
    return builtin_workload(name_or_path);
  } catch (const PerfError& e) {
    throw UsageError(e.what());
  }
}

void write_output(const CommonOptions& common, RunManifest& manifest, const std::string& text) {
  if (common.out.empty()) {
    std::cout << text;
    return;
  }
  manifest.add_output(common.out);
  std::ofstream out(common.out);
  if (!out) throw std::runtime_error("cannot write " + common.out);
  out << text;
  out.close();
  manifest.write_sidecar(common.out);
}

int sweep_sequence(const CommonOptions& common, const SweepOptions& o) {
  RunManifest manifest("sweep", common.args);
  if (o.from < 1 || o.to < o.from || o.step < 1) {
    throw UsageError("empty sequence range: --from " + std::to_string(o.from) + " --to " +
                     std::to_string(o.to) + " --step " + std::to_string(o.step));
  }
  SystemConfig s = resolve_system(o.system, manifest);
  const Workload w = resolve_workload(o.workload, s, manifest);
  const int need = chips_required(w, s);
  if (need > s.chips) s = s.with_chips(need);
  manifest.set_effective("system", to_json(s));
  manifest.set_effective("workload", to_json(w));
  manifest.set_effective("range", {o.from, o.to, o.step});

  const TopsCurve c = tops_curve(w, s, o.from, o.to, o.step);
  std::ostringstream csv;
  csv.precision(10);
  csv << "N,t_analog_us,t_digital_us,period_us,fps,tops,power_w,bw_gibs\n";
  for (const PerfReport& p : c.points) {
    csv << p.seq_len << ',' << p.stages.analog_s * 1e6 << ',' << p.stages.digital_s * 1e6 << ','
        << p.period_s * 1e6 << ',' << p.fps << ',' << p.tops << ',' << p.power_w << ','
        << p.io_gibs << '\n';
  }
  write_output(common, manifest, csv.str());
  std::cerr << "peak " << c.peak_tops << " TOPS at N=" << c.balance_seq_len << '\n';
  return 0;
}

}  // namespace

int cmd_sweep(const CommonOptions& common, const SweepOptions& o) {
  if (o.kind == "seq") return sweep_sequence(common, o);
  for (int v : o.values) {
    if (o.kind == "adc" && (v < 4 || v > 32)) throw UsageError("adc values must be in [4, 32]");
    if (o.kind != "adc" && (v < 0 || v > kUnboundedBudget)) {
      throw UsageError("cm values must be in [0, " + std::to_string(kUnboundedBudget) + "]");
    }
  }
  return sweep_accuracy(common, o);
}

int cmd_tables(const CommonOptions& common, const TablesOptions& o) {
  RunManifest manifest("tables", common.args);
  std::vector<std::string> ids;
  if (o.which == "all") {
    ids = table_ids();
  } else {
    ids = {o.which};
  }
  manifest.set_effective("tables", ids);
  std::ostringstream csv;
  bool ok = true;
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TableReport t = reproduce_table(ids[i]);
    std::ostringstream one;
    t.write_csv(one);
    std::string text = one.str();
    if (i > 0) text.erase(0, text.find('\n') + 1);  // one header
    csv << text;
    for (const auto& c : t.cells) {
      if (!c.soft && !c.within()) failures.push_back(t.id + " " + c.row + " " + c.column);
    }
    ok = ok && t.passed();
  }
  write_output(common, manifest, csv.str());
  if (!ok) {
    std::string msg = "cells outside tolerance:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw ToleranceFailure(msg);
  }
  return 0;
}

}  // namespace mxsim::cli
