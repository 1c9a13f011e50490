// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/analog_cim.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>

#include "mxsim/parallel.hpp"
#include "mxsim/tensor_io.hpp"

namespace mxsim {
namespace {

bool block_is_zero(const MxBlock& b) {
  return std::all_of(b.elements.begin(), b.elements.end(), [](Fp4Code c) { return c.is_zero(); });
}

std::string normalize_name(std::string_view name) {
  std::string out;
  for (char c : name) {
    if (c == '-' || c == '_' || c == ' ') continue;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

constexpr WeightCodes kBiasColumn = [] {
  WeightCodes w{};
  w.fill(static_cast<std::uint8_t>(kWeightBias));
  return w;
}();

// Activation side of one block row, shared by every output column.
struct PreparedBlock {
  BitPlanes planes;
  std::int64_t bias_term = 0;
  int exponent = 0;
  bool empty = false;
};

std::vector<PreparedBlock> prepare_row(const MxTensor& x, std::size_t row) {
  std::vector<PreparedBlock> out(x.block_cols());
  for (std::size_t b = 0; b < x.block_cols(); ++b) {
    const MxBlock& blk = x.block(row, b);
    const auto codes = int5_encode(blk, Int5Kind::kActivation);
    out[b].planes = bitplane_expand(codes);
    out[b].bias_term = bitplane_recombine(out[b].planes, kBiasColumn);
    out[b].exponent = blk.scale.exponent();
    out[b].empty = block_is_zero(blk);
  }
  return out;
}

void check_operands(const MxTensor& x, const AnalogLayerModel& layer) {
  if (x.orientation() != Orientation::kRowMajor) {
    throw ConfigError("analog layer: activations must be row-major blocked");
  }
  if (x.cols() != layer.in_features()) {
    throw ConfigError("analog layer: activation width " + std::to_string(x.cols()) +
                      " does not match layer input " + std::to_string(layer.in_features()));
  }
}

bool weight_block_empty(const AnalogLayerModel& layer, std::size_t br, std::size_t col) {
  const auto& w = layer.weight_codes(br, col);
  return std::all_of(w.begin(), w.end(), [](std::uint8_t c) { return c == kWeightBias; });
}

std::vector<BlockPartial> partials_from_prepared(const std::vector<PreparedBlock>& row,
                                                 const AnalogLayerModel& layer, std::size_t col,
                                                 bool use_effective) {
  std::vector<BlockPartial> out(row.size());
  for (std::size_t b = 0; b < row.size(); ++b) {
    const auto& w = layer.weight_codes(b, col);
    const int e_w =
        use_effective ? layer.effective_weight_exponent(b, col) : layer.weight_exponent(b, col);
    out[b].unbiased = bitplane_recombine(row[b].planes, w) - row[b].bias_term;
    out[b].scale_exp = row[b].exponent + e_w;
    out[b].empty = row[b].empty || weight_block_empty(layer, b, col);
  }
  return out;
}

int select_column_target(const AnalogConfig& cfg, const AnalogLayerModel& layer,
                         std::span<const BlockPartial> partials) {
  switch (cfg.strategy) {
    case TargetStrategy::kRowHist:
      return layer.target_exp() + cfg.target_offset;
    case TargetStrategy::kRow0:
      return row0_target(partials) + cfg.target_offset;
    case TargetStrategy::kRowOptimal:
      return row_optimal_target(partials) + cfg.target_offset;
  }
  return layer.target_exp();
}

ColumnResult evaluate_column(const std::vector<PreparedBlock>& row, const AnalogLayerModel& layer,
                             std::size_t col, const AnalogConfig& cfg, AnalogDiagnostics* diag) {
  const bool static_target = cfg.strategy == TargetStrategy::kRowHist;
  const auto partials = partials_from_prepared(row, layer, col, static_target);

  ColumnResult r;
  r.target_exp = select_column_target(cfg, layer, partials);
  AlignResult aligned = cfg.two_pass ? two_pass_column(partials, r.target_exp, cfg.cm_bits)
                                     : align_blocks(partials, r.target_exp, cfg.cm_bits);
  r.pre_adc = aligned.sum;
  r.tags = std::move(aligned.tags);
  // Decoded outputs carry the x2 activation and x2 weight encodings.
  const int value_shift = r.target_exp - 2;
  bool saturated = false;
  if (cfg.adc_bits) {
    const AdcReading reading = adc_quantize(r.pre_adc, *cfg.adc_bits, layer.adc_fullscale());
    r.adc_code = reading.code;
    saturated = reading.saturated;
    r.value = std::ldexp(static_cast<double>(reading.code) *
                             adc_lsb(*cfg.adc_bits, layer.adc_fullscale()),
                         value_shift);
  } else {
    r.ideal_adc = true;
    r.value = r.pre_adc.to_double(value_shift);
  }
  if (diag != nullptr) {
    diag->block_evaluations += partials.size();
    diag->underflow_blocks += static_cast<std::uint64_t>(aligned.underflows);
    diag->overflow_blocks += static_cast<std::uint64_t>(aligned.overflows);
    if (saturated) ++diag->adc_saturations;
  }
  return r;
}

}  // namespace

std::string to_string(TargetStrategy s) {
  switch (s) {
    case TargetStrategy::kRowHist:
      return "RowHist";
    case TargetStrategy::kRow0:
      return "Row0";
    case TargetStrategy::kRowOptimal:
      return "RowOptimal";
  }
  return "RowHist";
}

TargetStrategy parse_strategy(std::string_view name) {
  const std::string n = normalize_name(name);
  if (n == "rowhist" || n == "hist") return TargetStrategy::kRowHist;
  if (n == "row0") return TargetStrategy::kRow0;
  if (n == "rowoptimal" || n == "optimal" || n == "median") return TargetStrategy::kRowOptimal;
  throw ConfigError("unknown target strategy '" + std::string(name) +
                    "' (expected RowHist, Row0 or RowOptimal)");
}

AnalogConfig AnalogConfig::unbounded() {
  AnalogConfig c;
  c.cm_bits = kUnboundedBudget;
  c.adc_bits = std::nullopt;
  c.k_window = kUnboundedBudget;
  c.two_pass = false;
  // Headroom above the calibrated target, so operands larger than any seen
  // in calibration still land inside the window.
  c.target_offset = kUnboundedHeadroom;
  return c;
}

void AnalogConfig::validate() const {
  if (cm_bits < 0 || cm_bits > kUnboundedBudget) {
    throw ConfigError("cm_bits must be in [0, " + std::to_string(kUnboundedBudget) + "], got " +
                      std::to_string(cm_bits));
  }
  if (adc_bits && (*adc_bits < 4 || *adc_bits > 32)) {
    throw ConfigError("adc_bits must be in [4, 32] or ideal, got " + std::to_string(*adc_bits));
  }
  if (k_window < 0) throw ConfigError("k_window must be non-negative");
}

nlohmann::json to_json(const AnalogConfig& cfg) {
  nlohmann::json j;
  j["cm_bits"] = cfg.cm_bits;
  if (cfg.adc_bits) {
    j["adc_bits"] = *cfg.adc_bits;
  } else {
    j["adc_bits"] = "ideal";
  }
  j["k"] = cfg.k_window;
  j["two_pass"] = cfg.two_pass;
  j["strategy"] = to_string(cfg.strategy);
  j["target_offset"] = cfg.target_offset;
  return j;
}

AnalogConfig analog_config_from_json(const nlohmann::json& j) {
  AnalogConfig c;
  c.cm_bits = j.value("cm_bits", c.cm_bits);
  if (j.contains("adc_bits")) {
    const auto& a = j.at("adc_bits");
    if (a.is_string()) {
      if (normalize_name(a.get<std::string>()) != "ideal") {
        throw ConfigError("adc_bits must be an integer or \"ideal\"");
      }
      c.adc_bits = std::nullopt;
    } else {
      c.adc_bits = a.get<int>();
    }
  }
  c.k_window = j.value("k", c.k_window);
  c.two_pass = j.value("two_pass", c.two_pass);
  if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.target_offset = j.value("target_offset", c.target_offset);
  c.validate();
  return c;
}

BlockDot block_dot_int5(std::span<const std::int8_t, kBlockSize> x,
                        std::span<const std::uint8_t, kBlockSize> w) {
  BlockDot d;
  std::int64_t sum_x = 0;
  for (int i = 0; i < kBlockSize; ++i) {
    d.raw += std::int64_t{x[i]} * std::int64_t{w[i]};
    sum_x += x[i];
  }
  d.bias_term = kWeightBias * sum_x;
  return d;
}

BitPlanes bitplane_expand(std::span<const std::int8_t, kBlockSize> x) {
  BitPlanes p;
  for (int i = 0; i < kBlockSize; ++i) {
    const auto bits = static_cast<std::uint32_t>(x[i]) & 0x1F;
    for (int j = 0; j < 5; ++j) {
      if ((bits >> j) & 1U) p.planes[j] |= (1U << i);
    }
  }
  return p;
}

std::int64_t plane_partial(std::uint32_t plane, std::span<const std::uint8_t, kBlockSize> w) {
  std::int64_t t = 0;
  while (plane != 0) {
    const int i = std::countr_zero(plane);
    t += w[i];
    plane &= plane - 1;
  }
  return t;
}

std::int64_t bitplane_recombine(const BitPlanes& planes,
                                std::span<const std::uint8_t, kBlockSize> w) {
  std::int64_t sum = 0;
  for (int j = 0; j < 4; ++j) sum += plane_partial(planes.planes[j], w) << j;
  sum -= plane_partial(planes.planes[4], w) << 4;
  return sum;
}

AlignResult align_blocks(std::span<const BlockPartial> partials, int target_exp, int cm_bits) {
  AlignResult r;
  r.tags.assign(partials.size(), BlockTag::kInWindow);
  for (std::size_t b = 0; b < partials.size(); ++b) {
    const BlockPartial& p = partials[b];
    if (p.empty) continue;
    const int gap = p.scale_exp - target_exp;
    if (gap > 0) {
      r.tags[b] = BlockTag::kOverflow;
      ++r.overflows;
      const std::int64_t sign = (p.unbiased > 0) - (p.unbiased < 0);
      r.sum.add(sign * kBlockDotMax, 0);
    } else if (gap < -cm_bits) {
      r.tags[b] = BlockTag::kUnderflow;
      ++r.underflows;
    } else {
      r.sum.add(p.unbiased, gap);
    }
  }
  return r;
}

AlignResult two_pass_column(std::span<const BlockPartial> partials, int target_exp, int cm_bits) {
  AlignResult first = align_blocks(partials, target_exp, cm_bits);
  if (first.underflows == 0) return first;

  std::vector<BlockPartial> retry;
  std::vector<std::size_t> where;
  for (std::size_t b = 0; b < partials.size(); ++b) {
    if (first.tags[b] == BlockTag::kUnderflow) {
      retry.push_back(partials[b]);
      where.push_back(b);
    }
  }
  const AlignResult second = align_blocks(retry, target_exp - cm_bits, cm_bits);
  AlignResult merged;
  merged.sum = first.sum;
  merged.overflows = first.overflows;
  merged.tags = first.tags;
  DyadicSum pass2;
  for (std::size_t i = 0; i < retry.size(); ++i) {
    if (second.tags[i] == BlockTag::kUnderflow) {
      ++merged.underflows;
      continue;
    }
    merged.tags[where[i]] = BlockTag::kInWindow;
    // Pass-2 units are 2^-cm of pass-1 units.
    pass2.add(retry[i].unbiased, retry[i].scale_exp - (target_exp - cm_bits) - cm_bits);
  }
  merged.sum.add(pass2);
  return merged;
}

int row0_target(std::span<const BlockPartial> partials) {
  for (const BlockPartial& p : partials) {
    if (!p.empty) return p.scale_exp;
  }
  return partials.empty() ? 0 : partials.front().scale_exp;
}

int row_optimal_target(std::span<const BlockPartial> partials) {
  std::vector<int> scales;
  scales.reserve(partials.size());
  for (const BlockPartial& p : partials) {
    if (!p.empty) scales.push_back(p.scale_exp);
  }
  if (scales.empty()) return row0_target(partials);
  // Upper median: the element at index n/2 of the sorted scales.
  const auto mid = scales.begin() + static_cast<std::ptrdiff_t>(scales.size() / 2);
  std::nth_element(scales.begin(), mid, scales.end());
  return *mid;
}

double adc_lsb(int adc_bits, double fullscale) { return std::ldexp(fullscale, -(adc_bits - 1)); }

namespace {

AdcReading clamp_code(std::int64_t code, int adc_bits) {
  const std::int64_t hi = (std::int64_t{1} << (adc_bits - 1)) - 1;
  const std::int64_t lo = -(std::int64_t{1} << (adc_bits - 1));
  AdcReading r;
  r.code = std::clamp(code, lo, hi);
  r.saturated = r.code != code;
  return r;
}

}  // namespace

AdcReading adc_quantize(double sum, int adc_bits, double fullscale) {
  if (!(fullscale > 0.0)) throw ConfigError("adc fullscale must be positive");
  const double q = std::nearbyint(sum / adc_lsb(adc_bits, fullscale));
  const double limit = std::ldexp(1.0, 62);
  return clamp_code(static_cast<std::int64_t>(std::clamp(q, -limit, limit)), adc_bits);
}

AdcReading adc_quantize(const DyadicSum& sum, int adc_bits, double fullscale) {
  if (!(fullscale > 0.0)) throw ConfigError("adc fullscale must be positive");
  int exp = 0;
  const double mant = std::frexp(fullscale, &exp);
  if (mant != 0.5) return adc_quantize(sum.to_double(), adc_bits, fullscale);
  // fullscale = 2^(exp-1); lsb = 2^(exp-1-(bits-1)).
  const int lsb_exp = exp - adc_bits;
  return clamp_code(sum.round_to_integer(lsb_exp), adc_bits);
}

double adc_fullscale_for(double max_abs_sum, int adc_bits) {
  if (!(max_abs_sum > 0.0)) return 1.0;
  double f = std::ldexp(1.0, std::ilogb(max_abs_sum) + 1);
  if (adc_bits > 0) {
    // The top code must not round up past 2^(bits-1) - 1.
    while (max_abs_sum >= f - adc_lsb(adc_bits, f) / 2) f *= 2.0;
  }
  return f;
}

void AnalogDiagnostics::merge(const AnalogDiagnostics& o) {
  block_evaluations += o.block_evaluations;
  underflow_blocks += o.underflow_blocks;
  overflow_blocks += o.overflow_blocks;
  adc_saturations += o.adc_saturations;
  et_clips += o.et_clips;
}

nlohmann::json to_json(const AnalogDiagnostics& d) {
  return nlohmann::json{{"block_evaluations", d.block_evaluations},
                        {"underflow_blocks", d.underflow_blocks},
                        {"overflow_blocks", d.overflow_blocks},
                        {"adc_saturations", d.adc_saturations},
                        {"et_clips", d.et_clips}};
}

AnalogLayerModel::AnalogLayerModel(const MxTensor& weights, int target_exp, double adc_fullscale,
                                   int k_window)
    : weights_(weights),
      in_(weights.rows()),
      out_(weights.cols()),
      block_rows_(weights.block_rows()),
      target_exp_(target_exp),
      k_window_(k_window),
      adc_fullscale_(adc_fullscale) {
  if (weights.orientation() != Orientation::kColumnMajor) {
    throw ConfigError("analog layer: weights must be column-major blocked");
  }
  if (!(adc_fullscale > 0.0)) throw ConfigError("analog layer: adc fullscale must be positive");
  if (k_window < 0) throw ConfigError("analog layer: k must be non-negative");

  const std::size_t n = block_rows_ * out_;
  codes_.resize(n);
  e_w_.resize(n);
  e_w_eff_.resize(n);
  std::vector<bool> empty(n);
  for (std::size_t br = 0; br < block_rows_; ++br) {
    for (std::size_t c = 0; c < out_; ++c) {
      const std::size_t i = br * out_ + c;
      const MxBlock& b = weights.block(br, c);
      const auto w = int5_encode(b, Int5Kind::kWeight);
      for (int k = 0; k < kBlockSize; ++k) codes_[i][k] = static_cast<std::uint8_t>(w[k]);
      e_w_[i] = b.scale.exponent();
      empty[i] = block_is_zero(b);
    }
  }

  // E_T = E_N - E_W is held in [E_min, E_min + k].
  e_min_ = std::numeric_limits<int>::max();
  for (std::size_t i = 0; i < n; ++i) {
    if (!empty[i]) e_min_ = std::min(e_min_, target_exp_ - e_w_[i]);
  }
  if (e_min_ == std::numeric_limits<int>::max()) e_min_ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    e_w_eff_[i] = e_w_[i];
    if (empty[i]) continue;
    const int e_t = target_exp_ - e_w_[i];
    if (e_t > e_min_ + k_window_) {
      e_w_eff_[i] = target_exp_ - (e_min_ + k_window_);
      ++et_clips_;
    }
  }
}

nlohmann::json AnalogLayerModel::sidecar(const AnalogConfig& cfg) const {
  nlohmann::json j = to_json(cfg);
  j["E_N"] = target_exp_;
  j["E_min"] = e_min_;
  j["adc_fullscale"] = adc_fullscale_;
  j["k"] = k_window_;
  j["in_features"] = in_;
  j["out_features"] = out_;
  j["et_clips"] = et_clips_;
  return j;
}

void AnalogLayerModel::save(const std::string& stem, const AnalogConfig& cfg) const {
  write_mxt1(stem + ".mxt1", weights_);
  std::ofstream f(stem + ".json");
  if (!f) throw FormatError("cannot write " + stem + ".json");
  f << sidecar(cfg).dump(2) << "\n";
}

std::pair<AnalogLayerModel, AnalogConfig> AnalogLayerModel::load(const std::string& stem) {
  std::ifstream f(stem + ".json");
  if (!f) throw FormatError("cannot read " + stem + ".json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(stem + ".json: " + e.what());
  }
  AnalogConfig cfg = analog_config_from_json(j);
  AnalogLayerModel layer(read_mxt1(stem + ".mxt1"), j.at("E_N").get<int>(),
                         j.at("adc_fullscale").get<double>(), j.at("k").get<int>());
  return {std::move(layer), cfg};
}

std::vector<BlockPartial> column_partials(const MxTensor& x, std::size_t row,
                                          const AnalogLayerModel& layer, std::size_t col,
                                          bool use_effective_exponents) {
  check_operands(x, layer);
  return partials_from_prepared(prepare_row(x, row), layer, col, use_effective_exponents);
}

ColumnResult analog_column(const MxTensor& x, std::size_t row, const AnalogLayerModel& layer,
                           std::size_t col, const AnalogConfig& cfg, AnalogDiagnostics* diag) {
  check_operands(x, layer);
  cfg.validate();
  return evaluate_column(prepare_row(x, row), layer, col, cfg, diag);
}

AnalogLinearResult analog_linear(const MxTensor& x, const AnalogLayerModel& layer,
                                 const AnalogConfig& cfg) {
  check_operands(x, layer);
  cfg.validate();
  const std::size_t rows = x.rows();
  const std::size_t cols = layer.out_features();
  AnalogLinearResult r;
  r.values = Matrix<double>(rows, cols);
  r.codes = Matrix<std::int64_t>(rows, cols);
  r.target_exps = Matrix<int>(rows, cols);
  r.pre_adc = Matrix<double>(rows, cols);
  r.ideal_adc = !cfg.adc_bits.has_value();
  r.lsb = cfg.adc_bits ? adc_lsb(*cfg.adc_bits, layer.adc_fullscale()) : 0.0;

  std::vector<AnalogDiagnostics> per_row(rows);
  parallel_for(rows, [&](std::size_t i) {
    const auto prepared = prepare_row(x, i);
    for (std::size_t c = 0; c < cols; ++c) {
      const ColumnResult col = evaluate_column(prepared, layer, c, cfg, &per_row[i]);
      r.values(i, c) = col.value;
      r.codes(i, c) = col.adc_code;
      r.target_exps(i, c) = col.target_exp;
      r.pre_adc(i, c) = col.pre_adc.to_double();
    }
  });
  for (const auto& d : per_row) r.diag.merge(d);
  if (cfg.strategy == TargetStrategy::kRowHist) r.diag.et_clips += layer.et_clips();
  return r;
}

MxTensor analog_linear_forward(const MxTensor& x, const AnalogLayerModel& layer,
                               const AnalogConfig& cfg, AnalogDiagnostics* diag) {
  AnalogLinearResult r = analog_linear(x, layer, cfg);
  if (diag != nullptr) diag->merge(r.diag);
  return MxTensor::quantize(r.values, Orientation::kRowMajor);
}

Matrix<double> RawInt10Output::dequantize() const {
  if (ideal_adc) return ideal_values;
  Matrix<double> out(codes.rows(), codes.cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.data()[i] = std::ldexp(static_cast<double>(codes.data()[i]) * lsb,
                               target_exps.data()[i] - 2);
  }
  return out;
}

RawInt10Output analog_linear_raw(const MxTensor& x, const AnalogLayerModel& layer,
                                 const AnalogConfig& cfg, AnalogDiagnostics* diag) {
  AnalogLinearResult r = analog_linear(x, layer, cfg);
  if (diag != nullptr) diag->merge(r.diag);
  RawInt10Output out;
  out.codes = std::move(r.codes);
  out.target_exps = std::move(r.target_exps);
  out.lsb = r.lsb;
  out.ideal_adc = r.ideal_adc;
  if (r.ideal_adc) out.ideal_values = std::move(r.values);
  return out;
}

}  // namespace mxsim
