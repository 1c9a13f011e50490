// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Exponent-target selection for the analog macro and the saturation
// statistics behind it. Histograms record the block scale E_X + E_W of
// every block evaluation a linear layer performs.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mxsim/analog_cim.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim {

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExponentHistogram {
  std::map<int, std::uint64_t> bins;
  std::vector<std::map<int, std::uint64_t>> per_position;  // by block row
  // Evaluations where either operand block is all zero; they carry no scale.
  std::uint64_t empty_evaluations = 0;

  void record(std::size_t position, int exponent, std::uint64_t count = 1);
  void record_empty(std::uint64_t count) { empty_evaluations += count; }
  // Every (row, block row, column) evaluation of x * w.
  void record_linear(const MxTensor& x, const MxTensor& w);
  void merge(const ExponentHistogram& other);

  [[nodiscard]] std::uint64_t total() const;
  [[nodiscard]] bool has_scales() const { return !bins.empty(); }
  [[nodiscard]] int max_exponent() const;
  // Smallest exponent at or above `percentile` percent of the scaled mass.
  [[nodiscard]] int percentile_exponent(double percentile) const;

  friend bool operator==(const ExponentHistogram&, const ExponentHistogram&) = default;
};

nlohmann::json to_json(const ExponentHistogram& h);
ExponentHistogram histogram_from_json(const nlohmann::json& j);

struct LayerCalibration {
  int layer_id = 0;
  TargetStrategy strategy = TargetStrategy::kRowHist;
  int target_exp = 0;                  // E_N
  std::optional<int> second_target;    // E_N - cm with two-pass
  double adc_fullscale = 1.0;
  ExponentHistogram hist;
};

// RowHist: the largest recorded exponent (or a percentile of them). The
// online strategies keep this value as the layer's static reference.
LayerCalibration select_target(const ExponentHistogram& hist, TargetStrategy strategy,
                               const AnalogConfig& cfg, double percentile = 100.0);

// Histogram, target and ADC full scale of one layer from its digital-mode
// inputs. Throws CalibrationError on an empty input set.
LayerCalibration calibrate_layer(int layer_id, const std::vector<MxTensor>& inputs,
                                 const MxTensor& weights, const AnalogConfig& cfg,
                                 double percentile = 100.0);

AnalogLayerModel build_layer_model(const MxTensor& weights, const LayerCalibration& cal,
                                   const AnalogConfig& cfg);

struct ModelCalibration {
  std::string model_hash;
  AnalogConfig config;
  double percentile = 100.0;
  std::vector<LayerCalibration> layers;

  [[nodiscard]] nlohmann::json to_json() const;
  static ModelCalibration from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ModelCalibration load(const std::filesystem::path& path);
};

struct SaturationStats {
  int cm_bits = 0;
  std::uint64_t block_evaluations = 0;
  std::uint64_t overflow_blocks = 0;
  std::uint64_t underflow_blocks = 0;

  [[nodiscard]] double overflow_fraction() const;
  [[nodiscard]] double underflow_fraction() const;
  [[nodiscard]] double preserved_fraction() const;
};

nlohmann::json to_json(const SaturationStats& s);

// One calibrated linear layer and the activations it sees.
struct LayerWorkload {
  std::vector<MxTensor> inputs;
  MxTensor weights;
  LayerCalibration calibration;
};

// Block tag fractions over every evaluation, one entry per budget.
std::vector<SaturationStats> saturation_stats(const std::vector<LayerWorkload>& layers,
                                              const std::vector<int>& cm_sweep,
                                              const AnalogConfig& base);

}  // namespace mxsim
