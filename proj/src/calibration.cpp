// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace mxsim {
namespace {

bool block_is_zero(const MxBlock& b) {
  return std::all_of(b.elements.begin(), b.elements.end(), [](Fp4Code c) { return c.is_zero(); });
}

// Exponent counts of the non-empty blocks in one block row of x or w.
struct AxisCounts {
  std::map<int, std::uint64_t> exps;
  std::uint64_t nonempty = 0;
  std::uint64_t empty = 0;
};

double fraction(std::uint64_t part, std::uint64_t whole) {
  return whole == 0 ? 0.0 : static_cast<double>(part) / static_cast<double>(whole);
}

}  // namespace

void ExponentHistogram::record(std::size_t position, int exponent, std::uint64_t count) {
  if (per_position.size() <= position) per_position.resize(position + 1);
  bins[exponent] += count;
  per_position[position][exponent] += count;
}

void ExponentHistogram::record_linear(const MxTensor& x, const MxTensor& w) {
  if (x.orientation() != Orientation::kRowMajor || w.orientation() != Orientation::kColumnMajor ||
      x.cols() != w.rows()) {
    throw CalibrationError("record_linear: operands do not form a linear layer");
  }
  // Counts over (row, column) pairs factor into a convolution of the two
  // per-block-row exponent histograms.
  for (std::size_t b = 0; b < x.block_cols(); ++b) {
    AxisCounts xs, ws;
    for (std::size_t r = 0; r < x.rows(); ++r) {
      const MxBlock& blk = x.block(r, b);
      if (block_is_zero(blk)) {
        ++xs.empty;
      } else {
        ++xs.nonempty;
        ++xs.exps[blk.scale.exponent()];
      }
    }
    for (std::size_t c = 0; c < w.cols(); ++c) {
      const MxBlock& blk = w.block(b, c);
      if (block_is_zero(blk)) {
        ++ws.empty;
      } else {
        ++ws.nonempty;
        ++ws.exps[blk.scale.exponent()];
      }
    }
    for (const auto& [ex, nx] : xs.exps) {
      for (const auto& [ew, nw] : ws.exps) record(b, ex + ew, nx * nw);
    }
    if (per_position.size() <= b) per_position.resize(b + 1);
    record_empty(xs.empty * w.cols() + xs.nonempty * ws.empty);
  }
}

void ExponentHistogram::merge(const ExponentHistogram& other) {
  for (std::size_t p = 0; p < other.per_position.size(); ++p) {
    if (per_position.size() <= p) per_position.resize(p + 1);
    for (const auto& [e, n] : other.per_position[p]) {
      per_position[p][e] += n;
      bins[e] += n;
    }
  }
  empty_evaluations += other.empty_evaluations;
}

std::uint64_t ExponentHistogram::total() const {
  std::uint64_t t = empty_evaluations;
  for (const auto& [e, n] : bins) t += n;
  return t;
}

int ExponentHistogram::max_exponent() const {
  if (bins.empty()) throw CalibrationError("histogram has no non-empty block evaluations");
  return bins.rbegin()->first;
}

int ExponentHistogram::percentile_exponent(double percentile) const {
  if (bins.empty()) throw CalibrationError("histogram has no non-empty block evaluations");
  if (!(percentile > 0.0 && percentile <= 100.0)) {
    throw CalibrationError("percentile must be in (0, 100]");
  }
  if (percentile == 100.0) return max_exponent();
  std::uint64_t scaled = 0;
  for (const auto& [e, n] : bins) scaled += n;
  const double need = percentile / 100.0 * static_cast<double>(scaled);
  std::uint64_t seen = 0;
  for (const auto& [e, n] : bins) {
    seen += n;
    if (static_cast<double>(seen) >= need) return e;
  }
  return max_exponent();
}

nlohmann::json to_json(const ExponentHistogram& h) {
  auto bins_json = [](const std::map<int, std::uint64_t>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [e, n] : m) j[std::to_string(e)] = n;
    return j;
  };
  nlohmann::json positions = nlohmann::json::array();
  for (const auto& p : h.per_position) positions.push_back(bins_json(p));
  return {{"bins", bins_json(h.bins)},
          {"per_position", positions},
          {"empty_evaluations", h.empty_evaluations}};
}

ExponentHistogram histogram_from_json(const nlohmann::json& j) {
  auto parse_bins = [](const nlohmann::json& o) {
    std::map<int, std::uint64_t> m;
    for (const auto& [k, v] : o.items()) m[std::stoi(k)] = v.get<std::uint64_t>();
    return m;
  };
  ExponentHistogram h;
  h.bins = parse_bins(j.at("bins"));
  for (const auto& p : j.value("per_position", nlohmann::json::array())) {
    h.per_position.push_back(parse_bins(p));
  }
  h.empty_evaluations = j.value("empty_evaluations", std::uint64_t{0});
  return h;
}

LayerCalibration select_target(const ExponentHistogram& hist, TargetStrategy strategy,
                               const AnalogConfig& cfg, double percentile) {
  LayerCalibration c;
  c.strategy = strategy;
  c.hist = hist;
  c.target_exp = hist.has_scales() ? hist.percentile_exponent(percentile) : 0;
  if (cfg.two_pass) c.second_target = c.target_exp - cfg.cm_bits;
  return c;
}

AnalogLayerModel build_layer_model(const MxTensor& weights, const LayerCalibration& cal,
                                   const AnalogConfig& cfg) {
  return AnalogLayerModel(weights, cal.target_exp, cal.adc_fullscale, cfg.k_window);
}

LayerCalibration calibrate_layer(int layer_id, const std::vector<MxTensor>& inputs,
                                 const MxTensor& weights, const AnalogConfig& cfg,
                                 double percentile) {
  if (inputs.empty()) throw CalibrationError("calibration needs at least one input batch");
  ExponentHistogram hist;
  for (const MxTensor& x : inputs) hist.record_linear(x, weights);
  LayerCalibration cal = select_target(hist, cfg.strategy, cfg, percentile);
  cal.layer_id = layer_id;

  // Full scale from the ideal pre-ADC sums under the chosen target rule.
  AnalogConfig ideal = cfg;
  ideal.adc_bits = std::nullopt;
  const AnalogLayerModel probe(weights, cal.target_exp, 1.0, cfg.k_window);
  double max_abs = 0.0;
  for (const MxTensor& x : inputs) {
    const AnalogLinearResult r = analog_linear(x, probe, ideal);
    for (double v : r.pre_adc.data()) max_abs = std::max(max_abs, std::fabs(v));
  }
  cal.adc_fullscale = adc_fullscale_for(max_abs, cfg.adc_bits.value_or(0));
  return cal;
}

nlohmann::json ModelCalibration::to_json() const {
  nlohmann::json layers_json = nlohmann::json::array();
  for (const LayerCalibration& l : layers) {
    nlohmann::json j{{"layer_id", l.layer_id},
                     {"strategy", mxsim::to_string(l.strategy)},
                     {"E_N", l.target_exp},
                     {"adc_fullscale", l.adc_fullscale},
                     {"hist", mxsim::to_json(l.hist)}};
    if (l.second_target) j["E_N2"] = *l.second_target;
    layers_json.push_back(std::move(j));
  }
  return {{"model_hash", model_hash},
          {"strategy", mxsim::to_string(config.strategy)},
          {"config", mxsim::to_json(config)},
          {"percentile", percentile},
          {"per_layer", layers_json}};
}

ModelCalibration ModelCalibration::from_json(const nlohmann::json& j) {
  ModelCalibration m;
  try {
    m.model_hash = j.at("model_hash").get<std::string>();
    m.config = analog_config_from_json(j.at("config"));
    m.percentile = j.value("percentile", 100.0);
    for (const auto& l : j.at("per_layer")) {
      LayerCalibration c;
      c.layer_id = l.value("layer_id", static_cast<int>(m.layers.size()));
      c.strategy = parse_strategy(l.value("strategy", std::string("RowHist")));
      c.target_exp = l.at("E_N").get<int>();
      if (l.contains("E_N2")) c.second_target = l.at("E_N2").get<int>();
      c.adc_fullscale = l.at("adc_fullscale").get<double>();
      if (l.contains("hist")) c.hist = histogram_from_json(l.at("hist"));
      m.layers.push_back(std::move(c));
    }
  } catch (const nlohmann::json::exception& e) {
    throw CalibrationError(std::string("malformed calibration file: ") + e.what());
  }
  return m;
}

void ModelCalibration::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw CalibrationError("cannot write " + path.string());
  f << to_json().dump(2) << "\n";
}

ModelCalibration ModelCalibration::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw CalibrationError("cannot read " + path.string());
  try {
    return from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw CalibrationError(path.string() + ": " + e.what());
  }
}

double SaturationStats::overflow_fraction() const {
  return fraction(overflow_blocks, block_evaluations);
}
double SaturationStats::underflow_fraction() const {
  return fraction(underflow_blocks, block_evaluations);
}
double SaturationStats::preserved_fraction() const {
  if (block_evaluations == 0) return 1.0;
  return 1.0 - overflow_fraction() - underflow_fraction();
}

nlohmann::json to_json(const SaturationStats& s) {
  return {{"cm_bits", s.cm_bits},
          {"block_evaluations", s.block_evaluations},
          {"overflow_fraction", s.overflow_fraction()},
          {"underflow_fraction", s.underflow_fraction()},
          {"preserved_fraction", s.preserved_fraction()}};
}

std::vector<SaturationStats> saturation_stats(const std::vector<LayerWorkload>& layers,
                                              const std::vector<int>& cm_sweep,
                                              const AnalogConfig& base) {
  std::vector<SaturationStats> out;
  for (int cm : cm_sweep) {
    AnalogConfig cfg = base;
    cfg.cm_bits = cm;
    cfg.adc_bits = std::nullopt;
    SaturationStats s;
    s.cm_bits = cm;
    for (const LayerWorkload& l : layers) {
      const AnalogLayerModel model = build_layer_model(l.weights, l.calibration, cfg);
      for (const MxTensor& x : l.inputs) {
        const AnalogDiagnostics d = analog_linear(x, model, cfg).diag;
        s.block_evaluations += d.block_evaluations;
        s.overflow_blocks += d.overflow_blocks;
        s.underflow_blocks += d.underflow_blocks;
      }
    }
    out.push_back(s);
  }
  return out;
}

}  // namespace mxsim
