// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mxsim/analog_cim.hpp"
#include "mxsim/matrix.hpp"
#include "mxsim/transformer.hpp"

namespace mxsim::cli {

// Bad flag values or combinations; exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Results computed fine but missed a tolerance; exit code 1.
class ToleranceFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CommonOptions {
  std::vector<std::string> args;  // argv without the program name
  std::string config;             // optional JSON with model/analog/... sections
  std::optional<std::uint64_t> seed;
  std::string out;
};

// Analog knobs given on the command line; unset ones fall back to the
// config file, then to the built-in defaults.
struct AnalogFlags {
  std::optional<int> cm;
  std::optional<std::string> adc;
  std::optional<bool> two_pass;
  std::optional<std::string> strategy;
  std::optional<double> percentile;
};

struct TokenFlags {
  std::optional<int> sequences;
  std::optional<int> seq_len;
  std::string input;  // F64M file instead of synthetic tokens
};

struct QuantizeOptions {
  std::string input;
  std::string orientation = "row";
};

struct BuildOptions {
  std::optional<int> layers, d_model, heads, ffn_dim, classes;
  std::optional<double> spread;
};

struct CalibrateOptions {
  std::string model;
  AnalogFlags analog;
  TokenFlags tokens;
};

struct RunOptions {
  std::string model;
  std::string mode = "analog";
  std::string calibration;  // default <model>/calibration.json
  AnalogFlags analog;
  TokenFlags tokens;
};

struct SweepOptions {
  std::string kind;
  // seq
  std::string system = "base";
  std::string workload;  // default: the system's sizing workload
  int from = 32, to = 512, step = 1;
  // adc, cm, strategy
  std::string model;
  std::vector<int> values;
  AnalogFlags analog;
  TokenFlags tokens;
};

struct TablesOptions {
  std::string which;
};

int cmd_quantize(const CommonOptions& common, const QuantizeOptions& o);
int cmd_build(const CommonOptions& common, const BuildOptions& o);
int cmd_calibrate(const CommonOptions& common, const CalibrateOptions& o);
int cmd_run(const CommonOptions& common, const RunOptions& o);
int cmd_sweep(const CommonOptions& common, const SweepOptions& o);
int cmd_tables(const CommonOptions& common, const TablesOptions& o);
// adc, cm and strategy sweeps over a model bundle.
int sweep_accuracy(const CommonOptions& common, const SweepOptions& o);

// Shared plumbing.
nlohmann::json load_config_file(const std::string& path);  // {} for an empty path
// Flag > config file > base (the calibration's settings, or the defaults).
AnalogConfig resolve_analog(const nlohmann::json& config, const AnalogFlags& flags,
                            const AnalogConfig& base = {});
std::optional<int> parse_adc(const std::string& text);  // nullopt for "ideal"

// Token sets are seeded per purpose so calibration and evaluation never
// share sequences.
enum class TokenPurpose { kCalibration, kEvaluation };
struct TokenPlan {
  std::string kind = "synthetic";  // or "file"
  std::string path;
  std::uint64_t seed = 0;
  int sequences = 4;
  int seq_len = 64;
  TokenPurpose purpose = TokenPurpose::kEvaluation;
};
nlohmann::json to_json(const TokenPlan& p);
TokenPlan token_plan_from_json(const nlohmann::json& j);
TokenPlan resolve_tokens(const nlohmann::json& config, const TokenFlags& flags,
                         std::uint64_t seed, TokenPurpose purpose, const ModelConfig& model);
std::vector<Matrix<double>> materialize(const TokenPlan& plan, const ModelConfig& model);

}  // namespace mxsim::cli
