// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Behavioral model of the charge-trap-transistor compute-in-memory macro.
//
// A column computes, for each 32-element block, the INT5 dot product of the
// streamed activation codes with the resident weight codes (bit-serially,
// one two's-complement bit-plane at a time), removes the weight bias, shifts
// the block partial to a common target exponent within a limited budget,
// and digitizes the column sum with an n-bit ADC.
//
// Exponents in this module are unbiased: a block with E8M0 code c has
// exponent c - 127. The gap of a block is g = (E_X + E_W) - E_N; blocks with
// g in [-cm, 0] are attenuated into the sum, blocks below underflow to zero
// and blocks above saturate.
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mxsim/dyadic.hpp"
#include "mxsim/matrix.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A budget wider than any exponent spread the model produces. Larger
// budgets would exceed the exact accumulator's range.
inline constexpr int kUnboundedBudget = 48;
inline constexpr int kPlausibleMaxCmBits = 10;
// Binades of the unbounded window placed above the calibrated target.
inline constexpr int kUnboundedHeadroom = 16;
// Largest |sum x_i (w_i - 12)| over one block.
inline constexpr std::int64_t kBlockDotMax = 32 * 12 * 12;

enum class TargetStrategy { kRowHist, kRow0, kRowOptimal };

std::string to_string(TargetStrategy s);
TargetStrategy parse_strategy(std::string_view name);

struct AnalogConfig {
  int cm_bits = 3;
  std::optional<int> adc_bits = 10;  // nullopt: ideal ADC
  int k_window = 7;
  bool two_pass = true;
  TargetStrategy strategy = TargetStrategy::kRowHist;
  int target_offset = 0;

  // Every block aligned exactly, ideal ADC. The window spans 32 binades
  // below the calibrated target and 16 above it.
  static AnalogConfig unbounded();

  void validate() const;
  [[nodiscard]] bool physically_plausible() const { return cm_bits <= kPlausibleMaxCmBits; }
  [[nodiscard]] int effective_window() const { return two_pass ? 2 * cm_bits : cm_bits; }

  friend bool operator==(const AnalogConfig&, const AnalogConfig&) = default;
};

nlohmann::json to_json(const AnalogConfig& cfg);
AnalogConfig analog_config_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Block-level primitives
// ---------------------------------------------------------------------------

using ActivationCodes = std::array<std::int8_t, kBlockSize>;  // [-12, 12]
using WeightCodes = std::array<std::uint8_t, kBlockSize>;     // [0, 24]

struct BlockDot {
  std::int64_t raw = 0;        // sum x_i w_i
  std::int64_t bias_term = 0;  // w_b sum x_i
  [[nodiscard]] std::int64_t unbiased() const { return raw - bias_term; }
};

BlockDot block_dot_int5(std::span<const std::int8_t, kBlockSize> x,
                        std::span<const std::uint8_t, kBlockSize> w);

// planes[j] bit i holds bit j of x_i in 5-bit two's complement.
struct BitPlanes {
  std::array<std::uint32_t, 5> planes{};
};

BitPlanes bitplane_expand(std::span<const std::int8_t, kBlockSize> x);
// T_j: sum of the weights whose word line is driven by plane j.
std::int64_t plane_partial(std::uint32_t plane, std::span<const std::uint8_t, kBlockSize> w);
// sum_j s_j 2^j T_j with s_4 = -1 (sign mirror) and s_j = +1 otherwise.
std::int64_t bitplane_recombine(const BitPlanes& planes, std::span<const std::uint8_t, kBlockSize> w);

struct BlockPartial {
  std::int64_t unbiased = 0;  // T = sum x_i (w_i - w_b)
  int scale_exp = 0;          // E_X + E_W
  // An all-zero operand block: T is 0 at any alignment, so the block is
  // never tagged and never votes on a target exponent.
  bool empty = false;
};

enum class BlockTag : std::uint8_t { kInWindow, kUnderflow, kOverflow };

struct AlignResult {
  DyadicSum sum;  // in target units: sum of T * 2^g
  std::vector<BlockTag> tags;
  int underflows = 0;
  int overflows = 0;
};

AlignResult align_blocks(std::span<const BlockPartial> partials, int target_exp, int cm_bits);
// Pass 1 at E_N, then underflow-tagged blocks recomputed at E_N - cm.
AlignResult two_pass_column(std::span<const BlockPartial> partials, int target_exp, int cm_bits);

// Exponent-target rules evaluated per column for the online strategies.
int row0_target(std::span<const BlockPartial> partials);
int row_optimal_target(std::span<const BlockPartial> partials);

// ---------------------------------------------------------------------------
// ADC
// ---------------------------------------------------------------------------

struct AdcReading {
  std::int64_t code = 0;
  bool saturated = false;
};

double adc_lsb(int adc_bits, double fullscale);
AdcReading adc_quantize(double sum, int adc_bits, double fullscale);
// Exact for power-of-two full scales.
AdcReading adc_quantize(const DyadicSum& sum, int adc_bits, double fullscale);
// Smallest power of two whose ADC range holds max_abs_sum without clamping
// (1 when zero). An ideal ADC (adc_bits = 0) only needs fullscale > max.
double adc_fullscale_for(double max_abs_sum, int adc_bits);

// ---------------------------------------------------------------------------
// Layer model
// ---------------------------------------------------------------------------

struct AnalogDiagnostics {
  std::uint64_t block_evaluations = 0;
  std::uint64_t underflow_blocks = 0;
  std::uint64_t overflow_blocks = 0;
  std::uint64_t adc_saturations = 0;
  std::uint64_t et_clips = 0;

  void merge(const AnalogDiagnostics& o);
  friend bool operator==(const AnalogDiagnostics&, const AnalogDiagnostics&) = default;
};

nlohmann::json to_json(const AnalogDiagnostics& d);

// A linear layer resident in the macro. Immutable after construction.
class AnalogLayerModel {
 public:
  // weights: in x out, column-major blocked along `in`.
  AnalogLayerModel(const MxTensor& weights, int target_exp, double adc_fullscale,
                   int k_window = 7);

  [[nodiscard]] std::size_t in_features() const { return in_; }
  [[nodiscard]] std::size_t out_features() const { return out_; }
  [[nodiscard]] std::size_t block_rows() const { return block_rows_; }

  [[nodiscard]] const WeightCodes& weight_codes(std::size_t block_row, std::size_t col) const {
    return codes_[block_row * out_ + col];
  }
  // E_W as stored in the weight block.
  [[nodiscard]] int weight_exponent(std::size_t block_row, std::size_t col) const {
    return e_w_[block_row * out_ + col];
  }
  // E_W after clipping E_T = E_N - E_W into [E_min, E_min + k].
  [[nodiscard]] int effective_weight_exponent(std::size_t block_row, std::size_t col) const {
    return e_w_eff_[block_row * out_ + col];
  }

  [[nodiscard]] int target_exp() const { return target_exp_; }
  [[nodiscard]] int e_min() const { return e_min_; }
  [[nodiscard]] int k_window() const { return k_window_; }
  [[nodiscard]] double adc_fullscale() const { return adc_fullscale_; }
  [[nodiscard]] std::uint64_t et_clips() const { return et_clips_; }
  [[nodiscard]] const MxTensor& weights() const { return weights_; }

  // JSON sidecar: {E_N, E_min, adc_fullscale, cm_bits, k}.
  [[nodiscard]] nlohmann::json sidecar(const AnalogConfig& cfg) const;
  // Writes <stem>.json and <stem>.mxt1.
  void save(const std::string& stem, const AnalogConfig& cfg) const;
  static std::pair<AnalogLayerModel, AnalogConfig> load(const std::string& stem);

 private:
  MxTensor weights_;
  std::size_t in_ = 0;
  std::size_t out_ = 0;
  std::size_t block_rows_ = 0;
  std::vector<WeightCodes> codes_;
  std::vector<int> e_w_;
  std::vector<int> e_w_eff_;
  int target_exp_ = 0;
  int e_min_ = 0;
  int k_window_ = 7;
  double adc_fullscale_ = 1.0;
  std::uint64_t et_clips_ = 0;
};

struct ColumnResult {
  std::int64_t adc_code = 0;  // meaningless with an ideal ADC
  bool ideal_adc = false;
  DyadicSum pre_adc;          // target units
  int target_exp = 0;         // E_N used for this evaluation
  std::vector<BlockTag> tags;
  double value = 0.0;         // decoded real output
};

// Activation row `row` of x (row-major blocked) through output column `col`.
ColumnResult analog_column(const MxTensor& x, std::size_t row, const AnalogLayerModel& layer,
                           std::size_t col, const AnalogConfig& cfg,
                           AnalogDiagnostics* diag = nullptr);

// Block partials of one column, as seen before alignment.
std::vector<BlockPartial> column_partials(const MxTensor& x, std::size_t row,
                                          const AnalogLayerModel& layer, std::size_t col,
                                          bool use_effective_exponents);

struct AnalogLinearResult {
  Matrix<double> values;            // decoded outputs
  Matrix<std::int64_t> codes;       // raw signed ADC codes (INT10 for 10 bits)
  Matrix<int> target_exps;          // E_N per output element
  Matrix<double> pre_adc;           // pre-ADC sums in target units (rounded)
  bool ideal_adc = false;
  double lsb = 0.0;
  AnalogDiagnostics diag;
};

AnalogLinearResult analog_linear(const MxTensor& x, const AnalogLayerModel& layer,
                                 const AnalogConfig& cfg);

// Q/K/FFN path: decoded outputs re-quantized row-major to MXFP4.
MxTensor analog_linear_forward(const MxTensor& x, const AnalogLayerModel& layer,
                               const AnalogConfig& cfg, AnalogDiagnostics* diag = nullptr);

// V path: raw codes kept with their target exponents; decode on demand.
struct RawInt10Output {
  Matrix<std::int64_t> codes;
  Matrix<int> target_exps;
  double lsb = 0.0;
  bool ideal_adc = false;
  Matrix<double> ideal_values;  // only with an ideal ADC

  [[nodiscard]] Matrix<double> dequantize() const;
};

RawInt10Output analog_linear_raw(const MxTensor& x, const AnalogLayerModel& layer,
                                 const AnalogConfig& cfg, AnalogDiagnostics* diag = nullptr);

}  // namespace mxsim
