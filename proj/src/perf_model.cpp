// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/perf_model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mxsim {
namespace {

constexpr double kBitsPerElement = 4.25;  // FP4 element plus its share of the scale
constexpr double kGiB = 1024.0 * 1024.0 * 1024.0;

long ceil_div(long a, long b) { return (a + b - 1) / b; }

template <class F>
auto parse_or_throw(const char* what, F&& f) {
  try {
    return f();
  } catch (const nlohmann::json::exception& e) {
    throw PerfError(std::string("malformed ") + what + ": " + e.what());
  }
}

nlohmann::json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw PerfError("cannot open " + file.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw PerfError(file.string() + ": " + e.what());
  }
}

double duty(DutyClass c, const StageTimes& t) {
  const double period = t.period_s();
  switch (c) {
    case DutyClass::kAnalog:
    case DutyClass::kVector:
      return t.analog_s / period;
    case DutyClass::kDigital:
      return t.digital_s / period;
    case DutyClass::kConstant:
      return 1.0;
  }
  return 1.0;
}

}  // namespace

const char* to_string(DutyClass c) {
  switch (c) {
    case DutyClass::kAnalog: return "analog";
    case DutyClass::kDigital: return "digital";
    case DutyClass::kVector: return "vector";
    case DutyClass::kConstant: return "constant";
  }
  return "constant";
}

DutyClass duty_class_from_string(const std::string& s) {
  if (s == "analog") return DutyClass::kAnalog;
  if (s == "digital") return DutyClass::kDigital;
  if (s == "vector") return DutyClass::kVector;
  if (s == "constant") return DutyClass::kConstant;
  throw PerfError("unknown duty class '" + s + "'");
}

void SystemConfig::validate() const {
  if (array_dim < 1 || transformer_blocks < 1 || macros_per_block < 1) {
    throw PerfError("array_dim, transformer_blocks and macros_per_block must be positive");
  }
  if (mux_degree < 1 || bitplanes < 1) throw PerfError("mux_degree and bitplanes must be positive");
  if (passes != 1 && passes != 2) throw PerfError("passes must be 1 or 2");
  if (!(f_analog_hz > 0) || !(f_digital_hz > 0)) throw PerfError("clocks must be positive");
  if (pe_rows < 1 || pe_cols < 1 || arrays_per_block < 1) {
    throw PerfError("systolic geometry must be positive");
  }
  if (chips < 1) throw PerfError("chips must be >= 1");
  if (!(c_fill_cycles >= 0)) throw PerfError("c_fill_cycles must be >= 0");
  if (!(link_bytes_per_s > 0)) throw PerfError("link bandwidth must be positive");
  if (!(area_mm2 > 0)) throw PerfError("area must be positive");
  for (const auto& p : power) {
    if (!(p.watts >= 0)) throw PerfError("component power must be >= 0: " + p.name);
  }
}

double SystemConfig::peak_power_w() const {
  double sum = 0.0;
  for (const auto& p : power) sum += p.watts;
  return sum;
}

SystemConfig SystemConfig::with_chips(int n) const {
  SystemConfig s = *this;
  s.chips = n;
  s.validate();
  return s;
}

void Workload::validate() const {
  if (layers < 1 || d_model < 1 || ffn_dim < 1 || heads < 1 || seq_len < 1) {
    throw PerfError("workload dimensions must be positive");
  }
  if (d_model % heads != 0) throw PerfError("d_model must be a multiple of heads");
  if (!(params > 0)) throw PerfError("params must be positive");
}

nlohmann::json to_json(const SystemConfig& s) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& p : s.power) {
    comps.push_back({{"name", p.name}, {"watts", p.watts}, {"duty", to_string(p.duty)}});
  }
  return {{"name", s.name},
          {"array_dim", s.array_dim},
          {"transformer_blocks", s.transformer_blocks},
          {"macros_per_block", s.macros_per_block},
          {"mux_degree", s.mux_degree},
          {"bitplanes", s.bitplanes},
          {"passes", s.passes},
          {"f_analog_hz", s.f_analog_hz},
          {"f_digital_hz", s.f_digital_hz},
          {"pe_rows", s.pe_rows},
          {"pe_cols", s.pe_cols},
          {"arrays_per_block", s.arrays_per_block},
          {"chips", s.chips},
          {"c_fill_cycles", s.c_fill_cycles},
          {"link_bytes_per_s", s.link_bytes_per_s},
          {"area_mm2", s.area_mm2},
          {"power", comps}};
}

SystemConfig system_config_from_json(const nlohmann::json& j) {
  SystemConfig s = parse_or_throw("system config", [&] {
    SystemConfig d;  // defaults fill missing keys
    SystemConfig s;
    s.name = j.value("name", d.name);
    s.array_dim = j.value("array_dim", d.array_dim);
    s.transformer_blocks = j.value("transformer_blocks", d.transformer_blocks);
    s.macros_per_block = j.value("macros_per_block", d.macros_per_block);
    s.mux_degree = j.value("mux_degree", d.mux_degree);
    s.bitplanes = j.value("bitplanes", d.bitplanes);
    s.passes = j.value("passes", d.passes);
    s.f_analog_hz = j.value("f_analog_hz", d.f_analog_hz);
    s.f_digital_hz = j.value("f_digital_hz", d.f_digital_hz);
    s.pe_rows = j.value("pe_rows", d.pe_rows);
    s.pe_cols = j.value("pe_cols", d.pe_cols);
    s.arrays_per_block = j.value("arrays_per_block", d.arrays_per_block);
    s.chips = j.value("chips", d.chips);
    s.c_fill_cycles = j.value("c_fill_cycles", d.c_fill_cycles);
    s.link_bytes_per_s = j.value("link_bytes_per_s", d.link_bytes_per_s);
    s.area_mm2 = j.value("area_mm2", d.area_mm2);
    for (const auto& c : j.value("power", nlohmann::json::array())) {
      s.power.push_back({c.at("name").get<std::string>(), c.at("watts").get<double>(),
                         duty_class_from_string(c.at("duty").get<std::string>())});
    }
    return s;
  });
  s.validate();
  return s;
}

nlohmann::json to_json(const Workload& w) {
  return {{"name", w.name},       {"layers", w.layers}, {"d_model", w.d_model},
          {"ffn_dim", w.ffn_dim}, {"heads", w.heads},   {"seq_len", w.seq_len},
          {"params", w.params}};
}

Workload workload_from_json(const nlohmann::json& j) {
  Workload w = parse_or_throw("workload", [&] {
    Workload w;
    w.name = j.at("name").get<std::string>();
    w.layers = j.at("layers").get<int>();
    w.d_model = j.at("d_model").get<int>();
    w.ffn_dim = j.value("ffn_dim", 4 * w.d_model);
    w.heads = j.at("heads").get<int>();
    w.seq_len = j.at("seq_len").get<int>();
    w.params = j.at("params").get<double>();
    return w;
  });
  w.validate();
  return w;
}

SystemConfig load_system_config(const std::filesystem::path& file) {
  return system_config_from_json(read_json(file));
}

Workload load_workload(const std::filesystem::path& file) {
  return workload_from_json(read_json(file));
}

SystemConfig base_system() {
  SystemConfig s;
  s.name = "base";
  s.array_dim = 768;
  s.area_mm2 = 376.3;
  s.power = {{"systolic_arrays", 87.51, DutyClass::kDigital},
             {"softmax", 9.16, DutyClass::kDigital},
             {"transposers", 1.10, DutyClass::kDigital},
             {"macros", 48.93, DutyClass::kAnalog},
             {"adders", 0.88, DutyClass::kVector},
             {"layernorm", 5.40, DutyClass::kVector},
             {"gelu", 1.37, DutyClass::kVector},
             {"quantizers", 6.99, DutyClass::kVector},
             {"buffers", 1.70, DutyClass::kVector},
             {"srams", 0.12, DutyClass::kConstant}};
  return s;
}

SystemConfig large_system() {
  SystemConfig s;
  s.name = "large";
  s.array_dim = 1024;
  s.area_mm2 = 561.5;
  s.power = {{"systolic_arrays", 85.23, DutyClass::kDigital},
             {"softmax", 8.92, DutyClass::kDigital},
             {"transposers", 1.07, DutyClass::kDigital},
             {"macros", 67.80, DutyClass::kAnalog},
             {"adders", 1.18, DutyClass::kVector},
             {"layernorm", 7.21, DutyClass::kVector},
             {"gelu", 1.83, DutyClass::kVector},
             {"quantizers", 6.91, DutyClass::kVector},
             {"buffers", 2.26, DutyClass::kVector},
             {"srams", 0.20, DutyClass::kConstant}};
  return s;
}

std::vector<Workload> builtin_workloads() {
  // Vision token counts: (image / patch)^2 patches plus one class token.
  return {
      {"vit_b16", 12, 768, 3072, 12, 197, 86.6e6},
      {"vit_b32", 12, 768, 3072, 12, 50, 86.6e6},
      {"vit_b14", 12, 768, 3072, 12, 257, 86.6e6},
      {"vit_s16", 12, 384, 1536, 6, 197, 22.1e6},
      {"bert_base", 12, 768, 3072, 12, 512, 110e6},
      {"vit_l32_384", 24, 1024, 4096, 16, 145, 307e6},
      {"vit_l14", 24, 1024, 4096, 16, 257, 304e6},
      {"bert_large", 24, 1024, 4096, 16, 512, 335e6},
  };
}

Workload builtin_workload(const std::string& name) {
  for (auto& w : builtin_workloads()) {
    if (w.name == name) return w;
  }
  throw PerfError("unknown workload '" + name + "'");
}

Workload sizing_workload(const SystemConfig& s, int seq_len) {
  Workload w;
  w.name = s.name + "_sizing";
  w.layers = s.transformer_blocks;
  w.d_model = s.array_dim;
  w.ffn_dim = 4 * s.array_dim;
  w.heads = std::max(1, s.array_dim / 64);
  w.seq_len = seq_len;
  w.params = 12.0 * w.layers * static_cast<double>(w.d_model) * w.d_model;
  return w;
}

double macro_tops(int rows, int cols, int mux, double f_hz, int passes) {
  if (rows < 1 || cols < 1 || mux < 1 || passes < 1 || !(f_hz > 0)) {
    throw PerfError("macro_tops needs positive parameters");
  }
  return 2.0 * rows * cols * f_hz / (static_cast<double>(mux) * passes) / 1e12;
}

FlopSplit flop_split(const Workload& w, int seq_len) {
  const double n = seq_len;
  const double d = w.d_model;
  FlopSplit f;
  f.static_ops = w.layers * (4.0 * 2.0 * d * d + 2.0 * 2.0 * d * w.ffn_dim) * n;
  f.dynamic_ops = w.layers * 4.0 * n * n * d;
  return f;
}

int chips_required(const Workload& w, const SystemConfig& s) {
  return static_cast<int>(ceil_div(w.layers, s.transformer_blocks));
}

double StageTimes::period_s() const { return std::max({analog_s, digital_s, link_s}); }

double activation_bytes(int seq_len, int d_model) {
  return static_cast<double>(seq_len) * d_model * kBitsPerElement / 8.0;
}

StageTimes stage_times(const Workload& w, const SystemConfig& s, int seq_len) {
  w.validate();
  s.validate();
  if (seq_len < 1) throw PerfError("sequence length must be >= 1");
  if (w.d_model > s.array_dim) {
    throw PerfError(w.name + ": d_model " + std::to_string(w.d_model) + " exceeds array_dim " +
                    std::to_string(s.array_dim));
  }
  const int need = chips_required(w, s);
  if (need > s.chips) {
    throw PerfError(w.name + " needs " + std::to_string(need) + " chips; system has " +
                    std::to_string(s.chips));
  }
  StageTimes t;
  // Every macro sees each token once per pass; macros run side by side.
  const double per_token = static_cast<double>(s.passes) * s.mux_degree / s.f_analog_hz;
  t.analog_s = seq_len * per_token;
  // QK^T and SV run on separate arrays, so one GEMM's tiling sets the stage.
  const long tiles = ceil_div(seq_len, s.pe_rows) * ceil_div(seq_len, s.pe_cols);
  t.digital_s = w.heads * static_cast<double>(tiles) * (w.d_k() + s.c_fill_cycles) / s.f_digital_hz;
  if (need > 1) t.link_s = activation_bytes(seq_len, w.d_model) / s.link_bytes_per_s;
  return t;
}

nlohmann::json to_json(const PerfReport& r) {
  return {{"workload", r.workload},
          {"system", r.system},
          {"seq_len", r.seq_len},
          {"chips", r.chips},
          {"t_analog_s", r.stages.analog_s},
          {"t_digital_s", r.stages.digital_s},
          {"t_link_s", r.stages.link_s},
          {"period_s", r.period_s},
          {"fps", r.fps},
          {"static_ops", r.ops.static_ops},
          {"dynamic_ops", r.ops.dynamic_ops},
          {"tops", r.tops},
          {"power_w", r.power_w},
          {"tops_per_w", r.tops_per_w},
          {"tops_per_mm2", r.tops_per_mm2},
          {"io_gibs", r.io_gibs},
          {"array_utilization", r.array_utilization}};
}

namespace {

PerfReport evaluate_with_power(const Workload& w, const SystemConfig& s, int seq_len,
                               const StageTimes* reference) {
  PerfReport r;
  r.workload = w.name;
  r.system = s.name;
  r.seq_len = seq_len;
  r.chips = chips_required(w, s);
  r.stages = stage_times(w, s, seq_len);
  r.period_s = r.stages.period_s();
  r.fps = 1.0 / r.period_s;
  r.ops = flop_split(w, seq_len);
  r.tops = r.ops.total() * r.fps / 1e12;
  if (reference != nullptr) {
    double chip_w = 0.0;
    for (const auto& p : s.power) {
      const double ref = duty(p.duty, *reference);
      chip_w += ref > 0 ? p.watts * duty(p.duty, r.stages) / ref : p.watts;
    }
    r.power_w = chip_w * r.chips;
    r.tops_per_w = r.power_w > 0 ? r.tops / r.power_w : 0.0;
  }
  r.tops_per_mm2 = r.tops / (s.area_mm2 * r.chips);
  // Host in, host out, and every chip-to-chip hop carry one activation.
  r.io_gibs = r.fps * (r.chips + 1) * activation_bytes(seq_len, w.d_model) / kGiB;
  r.array_utilization = static_cast<double>(w.d_model) / s.array_dim;
  return r;
}

TopsCurve sweep(const Workload& w, const SystemConfig& s, int n_min, int n_max, int step,
                const StageTimes* reference) {
  if (n_min < 1 || n_max < n_min || step < 1) throw PerfError("empty sequence-length range");
  TopsCurve c;
  for (int n = n_min; n <= n_max; n += step) {
    c.points.push_back(evaluate_with_power(w, s, n, reference));
    if (c.points.back().tops > c.peak_tops) {
      c.peak_tops = c.points.back().tops;
      c.balance_seq_len = n;
    }
  }
  return c;
}

constexpr int kPeakSearchMax = 1024;

// Stage times at the sizing workload's balance point, where the component
// powers are quoted.
StageTimes reference_stages(const SystemConfig& s) {
  SystemConfig one = s;
  one.chips = 1;
  const Workload sizing = sizing_workload(one, 1);
  const TopsCurve c = sweep(sizing, one, 1, kPeakSearchMax, 1, nullptr);
  return c.points[static_cast<std::size_t>(c.balance_seq_len - 1)].stages;
}

}  // namespace

PerfReport evaluate(const Workload& w, const SystemConfig& s, int seq_len) {
  const StageTimes ref = reference_stages(s);
  return evaluate_with_power(w, s, seq_len, &ref);
}

PerfReport model_throughput(const Workload& w, const SystemConfig& s) {
  return evaluate(w, s, w.seq_len);
}

TopsCurve tops_curve(const Workload& w, const SystemConfig& s, int n_min, int n_max, int step) {
  const StageTimes ref = reference_stages(s);
  return sweep(w, s, n_min, n_max, step, &ref);
}

TopsCurve system_peak(const SystemConfig& s) {
  SystemConfig one = s;
  one.chips = 1;
  return tops_curve(sizing_workload(one, 1), one, 1, kPeakSearchMax);
}

double power_estimate(const Workload& w, const SystemConfig& s, int seq_len) {
  return evaluate(w, s, seq_len).power_w;
}

double io_penalty(double params, int seq_len, int d_model, double batch) {
  if (!(batch >= 1)) throw PerfError("batch must be >= 1");
  if (!(params > 0) || seq_len < 1 || d_model < 1) throw PerfError("io_penalty needs positive sizes");
  const double activation_io = 2.0 * seq_len * d_model * 2.0;  // 16-bit in and out
  const double weight_bytes = params * 2.0;
  return 1.0 + weight_bytes / (batch * activation_io);
}

int max_batch(int seq_len, int d_model, double cache_bytes) {
  if (seq_len < 1 || d_model < 1) throw PerfError("max_batch needs positive sizes");
  return static_cast<int>(std::floor(cache_bytes / activation_bytes(seq_len, d_model)));
}

}  // namespace mxsim
