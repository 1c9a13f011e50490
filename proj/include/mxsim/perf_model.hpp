// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Closed-form timing, throughput, power and I/O model of the accelerator.
// A sequence moves through a pipeline of analog linear stages and digital
// attention stages; the slowest stage sets the period. Everything here is a
// pure function of the configs.
#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace mxsim {

class PerfError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Which pipeline stage keeps a component busy.
enum class DutyClass {
  kAnalog,    // macros; busy for the analog stage
  kDigital,   // systolic arrays, softmax, transposers
  kVector,    // elementwise lane fed at the token rate of the analog stage
  kConstant,  // always on
};

const char* to_string(DutyClass c);
DutyClass duty_class_from_string(const std::string& s);

struct PowerComponent {
  std::string name;
  double watts = 0.0;  // at the system's peak-throughput sequence length
  DutyClass duty = DutyClass::kConstant;
};

struct SystemConfig {
  std::string name = "base";
  int array_dim = 768;
  int transformer_blocks = 12;  // per chip
  int macros_per_block = 12;
  int mux_degree = 10;
  int bitplanes = 5;
  int passes = 2;
  double f_analog_hz = 169e6;
  double f_digital_hz = 1e9;
  int pe_rows = 32;
  int pe_cols = 64;
  int arrays_per_block = 2;
  int chips = 1;
  double c_fill_cycles = 8.0;   // per output tile
  double link_bytes_per_s = 16e9;
  double area_mm2 = 376.3;      // per chip
  std::vector<PowerComponent> power;

  void validate() const;
  [[nodiscard]] double peak_power_w() const;
  // Two-chip (or wider) copy of this system.
  [[nodiscard]] SystemConfig with_chips(int n) const;
};

struct Workload {
  std::string name;
  int layers = 12;
  int d_model = 768;
  int ffn_dim = 3072;
  int heads = 12;
  int seq_len = 197;
  double params = 86.6e6;

  void validate() const;
  [[nodiscard]] int d_k() const { return d_model / heads; }
};

nlohmann::json to_json(const SystemConfig& s);
SystemConfig system_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Workload& w);
Workload workload_from_json(const nlohmann::json& j);

SystemConfig load_system_config(const std::filesystem::path& file);
Workload load_workload(const std::filesystem::path& file);

// Built-in defaults; the checked-in configs mirror them.
SystemConfig base_system();
SystemConfig large_system();
std::vector<Workload> builtin_workloads();
Workload builtin_workload(const std::string& name);  // throws PerfError if unknown

// A square encoder the system was sized for: d = array_dim, 64-wide heads,
// ffn = 4d, one layer per block.
Workload sizing_workload(const SystemConfig& s, int seq_len);

double macro_tops(int rows, int cols, int mux, double f_hz, int passes);

struct FlopSplit {
  double static_ops = 0.0;   // weight-stationary linears
  double dynamic_ops = 0.0;  // both activation x activation products
  [[nodiscard]] double total() const { return static_ops + dynamic_ops; }
  [[nodiscard]] double static_fraction() const { return static_ops / total(); }
};

FlopSplit flop_split(const Workload& w, int seq_len);

// Smallest number of chips holding every layer in its own block.
int chips_required(const Workload& w, const SystemConfig& s);

struct StageTimes {
  double analog_s = 0.0;
  double digital_s = 0.0;
  double link_s = 0.0;  // zero on one chip
  [[nodiscard]] double period_s() const;
};

// Throws PerfError when d_model exceeds the array or the layers need more
// chips than the system has.
StageTimes stage_times(const Workload& w, const SystemConfig& s, int seq_len);

struct PerfReport {
  std::string workload;
  std::string system;
  int seq_len = 0;
  int chips = 1;
  StageTimes stages;
  double period_s = 0.0;
  double fps = 0.0;
  FlopSplit ops;
  double tops = 0.0;
  double power_w = 0.0;
  double tops_per_w = 0.0;
  double tops_per_mm2 = 0.0;
  double io_gibs = 0.0;
  double array_utilization = 0.0;  // d_model / array_dim
};

nlohmann::json to_json(const PerfReport& r);

PerfReport evaluate(const Workload& w, const SystemConfig& s, int seq_len);
// At the workload's own sequence length.
PerfReport model_throughput(const Workload& w, const SystemConfig& s);

struct TopsCurve {
  std::vector<PerfReport> points;  // ascending N
  int balance_seq_len = 0;         // first argmax of TOPS
  double peak_tops = 0.0;
};

TopsCurve tops_curve(const Workload& w, const SystemConfig& s, int n_min, int n_max,
                     int step = 1);

// Peak of the system's sizing workload over N in [1, 1024].
TopsCurve system_peak(const SystemConfig& s);

// Component power scaled by each class's duty relative to the duty it has
// at the system's own peak point; summed over chips.
double power_estimate(const Workload& w, const SystemConfig& s, int seq_len);

// Host-side batching baseline: 16-bit weights streamed once per batch against
// 16-bit activations in and out, and a 4.25-bit resident activation set.
double io_penalty(double params, int seq_len, int d_model, double batch);
int max_batch(int seq_len, int d_model, double cache_bytes = 30.0 * 1048576.0);

// Bytes of one N x d activation at 4.25 bits per element.
double activation_bytes(int seq_len, int d_model);

}  // namespace mxsim
