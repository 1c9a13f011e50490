// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// mxsim command-line tool. Exit codes: 0 success, 1 failure (a tolerance
// miss or a runtime error), 2 usage error.
#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"
#include "commands.hpp"
#include "mxsim/parallel.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

void add_common(CLI::App* app, mxsim::cli::CommonOptions& c) {
  app->add_option("--config", c.config, "JSON config (sections: model, analog, calibration, evaluation, build)");
  app->add_option("--seed", c.seed, "Seed for weights and synthetic tokens");
  app->add_option("--out", c.out, "Output path (stdout when omitted, where allowed)");
}

void add_analog(CLI::App* app, mxsim::cli::AnalogFlags& a) {
  app->add_option("--cm", a.cm, "Alignment budget in binades; above 48 means unbounded");
  app->add_option("--adc", a.adc, "ADC resolution in bits, or 'ideal'");
  app->add_flag("--two-pass,!--one-pass", a.two_pass, "Second pass for blocks below the window");
  app->add_option("--strategy", a.strategy, "RowHist, RowHist-2Pass, Row0 or RowOptimal");
  app->add_option("--percentile", a.percentile, "Calibration percentile of the exponent histogram");
}

void add_tokens(CLI::App* app, mxsim::cli::TokenFlags& t) {
  app->add_option("--sequences", t.sequences, "Number of synthetic sequences");
  app->add_option("--seq-len", t.seq_len, "Tokens per synthetic sequence");
  app->add_option("--input", t.input, "F64M token matrix instead of synthetic tokens")
      ->check(CLI::ExistingFile);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mxsim::cli;
  CLI::App app{"mxsim: MXFP4 analog in-memory transformer simulator"};
  app.require_subcommand(1);
  app.fallthrough();  // --threads may follow the subcommand
  app.set_version_flag("--version", std::string(MXSIM_VERSION));

  CommonOptions common;
  // Thread count never changes results, so it stays out of the manifest.
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--threads") {
      ++i;
    } else if (a.rfind("--threads=", 0) != 0) {
      common.args.push_back(a);
    }
  }
  std::optional<int> threads;
  app.add_option("--threads", threads, "Worker threads (default: MXSIM_THREADS, else 1)")
      ->check(CLI::PositiveNumber);

  QuantizeOptions quantize;
  auto* q = app.add_subcommand("quantize", "Quantize an F64M matrix to MXT1 with statistics");
  add_common(q, common);
  q->add_option("--input", quantize.input, "F64M matrix")->required()->check(CLI::ExistingFile);
  q->add_option("--orientation", quantize.orientation, "Blocked axis: row or col")
      ->check(CLI::IsMember({"row", "col"}));

  BuildOptions build;
  auto* b = app.add_subcommand("build", "Create a seeded random model bundle");
  add_common(b, common);
  b->add_option("--layers", build.layers);
  b->add_option("--d-model", build.d_model);
  b->add_option("--heads", build.heads);
  b->add_option("--ffn-dim", build.ffn_dim);
  b->add_option("--classes", build.classes);
  b->add_option("--spread", build.spread, "Per-linear weight scale spread in binades");

  CalibrateOptions calibrate;
  auto* c = app.add_subcommand("calibrate", "Choose exponent targets and ADC full scales");
  add_common(c, common);
  c->add_option("--model", calibrate.model, "Model bundle directory")->required();
  add_analog(c, calibrate.analog);
  add_tokens(c, calibrate.tokens);

  RunOptions run;
  auto* r = app.add_subcommand("run", "Forward passes and mode comparison metrics");
  add_common(r, common);
  r->add_option("--model", run.model, "Model bundle directory")->required();
  r->add_option("--mode", run.mode, "reference, digital or analog")
      ->check(CLI::IsMember({"reference", "digital", "analog"}));
  r->add_option("--calibration", run.calibration, "Calibration file (default <model>/calibration.json)");
  add_analog(r, run.analog);
  add_tokens(r, run.tokens);

  SweepOptions sweep;
  auto* s = app.add_subcommand("sweep", "CSV sweeps: seq (throughput), adc, cm, strategy (accuracy)");
  add_common(s, common);
  s->add_option("kind", sweep.kind, "seq, adc, cm or strategy")
      ->required()
      ->check(CLI::IsMember({"seq", "adc", "cm", "strategy"}));
  s->add_option("--system", sweep.system, "base, large or a system JSON (seq)");
  s->add_option("--workload", sweep.workload, "Workload name or JSON (seq)");
  s->add_option("--from", sweep.from, "First sequence length (seq)");
  s->add_option("--to", sweep.to, "Last sequence length (seq)");
  s->add_option("--step", sweep.step, "Sequence length step (seq)");
  s->add_option("--model", sweep.model, "Model bundle directory (adc, cm, strategy)");
  s->add_option("--values", sweep.values, "Comma-separated sweep values")->delimiter(',');
  add_analog(s, sweep.analog);
  add_tokens(s, sweep.tokens);

  TablesOptions tables;
  auto* t = app.add_subcommand("tables", "Model values beside the published figures, as CSV");
  add_common(t, common);
  t->add_option("which", tables.which, "t1, t3, t5, t8 or all")
      ->required()
      ->check(CLI::IsMember({"t1", "t3", "t5", "t8", "all"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (threads) {
      mxsim::set_num_threads(*threads);
    } else if (!std::getenv("MXSIM_THREADS")) {
      mxsim::set_num_threads(1);
    }
    if (*q) return cmd_quantize(common, quantize);
    if (*b) return cmd_build(common, build);
    if (*c) return cmd_calibrate(common, calibrate);
    if (*r) return cmd_run(common, run);
    if (*s) {
      if (sweep.kind != "seq" && sweep.model.empty()) throw UsageError("sweep " + sweep.kind + " needs --model");
      return cmd_sweep(common, sweep);
    }
    if (*t) return cmd_tables(common, tables);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ToleranceFailure& e) {
    std::cerr << "tolerance failure: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}
