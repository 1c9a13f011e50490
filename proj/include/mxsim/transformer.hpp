// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Encoder-only transformer forward passes in three execution modes: real
// arithmetic, all-digital MXFP4, and MXFP4 with the analog macro model for
// every linear layer. The residual stream is BF16 in the quantized modes.
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mxsim/analog_cim.hpp"
#include "mxsim/attention.hpp"
#include "mxsim/bf16.hpp"
#include "mxsim/calibration.hpp"
#include "mxsim/matrix.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim {

class ModelError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TokenSource {
  std::string kind = "synthetic";  // or "file" (an F64M matrix)
  std::string path;
  int components = 4;      // mixture components
  double drift = 2.0;      // binades of scale drift across the sequence
};

struct ModelConfig {
  std::string name = "toy";
  int layers = 2;
  int d_model = 128;
  int ffn_dim = 512;
  int heads = 2;
  int d_k = 64;
  int max_seq = 256;
  int classes = 10;  // toy classification head
  SoftmaxMode softmax = SoftmaxMode::kStandard;
  TokenSource tokens;

  // d_model == heads * d_k; d_k, d_model and ffn_dim multiples of 32.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

enum class LinearSlot : int { kQuery, kKey, kValue, kOutput, kFfnUp, kFfnDown };
inline constexpr int kLinearSlots = 6;
const char* slot_name(LinearSlot s);
// Calibration layer id of a linear: layer * 6 + slot.
inline int linear_id(int layer, LinearSlot s) { return layer * kLinearSlots + static_cast<int>(s); }

struct LinearWeights {
  Matrix<double> real;  // in x out
  MxTensor mx;          // column-major blocked along `in`
};

struct NormParams {
  std::vector<Bf16> gain;
  std::vector<Bf16> bias;
};

struct EncoderLayerWeights {
  std::array<LinearWeights, kLinearSlots> linear;
  NormParams ln1, ln2;

  [[nodiscard]] const LinearWeights& operator[](LinearSlot s) const {
    return linear[static_cast<std::size_t>(s)];
  }
};

struct EncoderModel {
  ModelConfig config;
  std::vector<EncoderLayerWeights> layers;
  Matrix<double> head;  // d_model x classes

  // Weights ~ N(0, 1/fan_in), each linear additionally scaled by 2^u with
  // u uniform in [-spread, spread].
  static EncoderModel random(const ModelConfig& config, std::uint64_t seed, double spread = 1.0);

  // FNV-1a over the configuration and every parameter, hex encoded.
  [[nodiscard]] std::string hash() const;

  // config.json, layer<i>/<slot>.mxt1 (+ .f64m), layer<i>/norm.f64m, head.f64m.
  void save(const std::filesystem::path& dir) const;
  // A linear without an .f64m file takes its dequantized MXT1 as real weights.
  static EncoderModel load(const std::filesystem::path& dir);
};

LinearWeights make_linear(Matrix<double> real);

// BF16 elementwise stages.
Matrix<Bf16> layernorm_bf16(const Matrix<Bf16>& x, const NormParams& p);
Bf16 gelu_bf16(Bf16 x);
double gelu(double x);
Matrix<Bf16> residual_add_bf16(const Matrix<Bf16>& a, const Matrix<Bf16>& b);
Matrix<double> layernorm_f64(const Matrix<double>& x, const NormParams& p);

Matrix<Bf16> to_bf16(const Matrix<double>& m);
Matrix<double> to_f64(const Matrix<Bf16>& m);

// Per-linear analog models built from a calibration.
struct AnalogPlan {
  AnalogConfig config;
  std::vector<AnalogLayerModel> linears;  // indexed by linear_id

  static AnalogPlan build(const EncoderModel& model, const ModelCalibration& cal,
                          const AnalogConfig& cfg);
};

enum class ModeKind { kReference, kDigital, kAnalog };

struct ExecutionMode {
  ModeKind kind = ModeKind::kDigital;
  std::shared_ptr<const AnalogPlan> plan;  // kAnalog only

  static ExecutionMode reference() { return {ModeKind::kReference, nullptr}; }
  static ExecutionMode digital() { return {ModeKind::kDigital, nullptr}; }
  static ExecutionMode analog(const EncoderModel& model, const ModelCalibration& cal,
                              const AnalogConfig& cfg);
};

const char* to_string(ModeKind k);

// MXFP4 operands seen by each linear of one layer (quantized modes).
struct LayerTrace {
  std::array<MxTensor, kLinearSlots> inputs;
};

// One encoder layer. x is N x d_model; in the quantized modes it is
// rounded to BF16 on entry and the result is BF16-representable.
Matrix<double> encoder_layer_forward(const Matrix<double>& x, const EncoderModel& model,
                                     int layer, const ExecutionMode& mode,
                                     LayerTrace* trace = nullptr,
                                     AnalogDiagnostics* diag = nullptr);

struct ForwardResult {
  std::vector<Matrix<double>> layer_outputs;  // after each layer
  Matrix<double> embeddings;                  // final residual stream
  std::vector<double> logits;                 // toy head on token 0
  int top1 = 0;
  AnalogDiagnostics diag;
};

ForwardResult model_forward(const EncoderModel& model, const Matrix<double>& tokens,
                            const ExecutionMode& mode, std::vector<LayerTrace>* traces = nullptr);

// Seeded Gaussian mixture tokens whose scale drifts by `drift` binades
// from the first to the last token.
Matrix<double> synthetic_tokens(std::size_t n, std::size_t d_model, std::uint64_t seed,
                                int components = 4, double drift = 2.0);

// Histograms of every linear (indexed by linear_id) from digital-mode runs.
std::vector<ExponentHistogram> collect_histograms(const EncoderModel& model,
                                                  const std::vector<Matrix<double>>& inputs);

// Targets and ADC full scales for every linear from digital-mode runs.
ModelCalibration calibrate_model(const EncoderModel& model,
                                 const std::vector<Matrix<double>>& inputs,
                                 const AnalogConfig& cfg, double percentile = 100.0);

struct LayerErrors {
  int layer = 0;
  double digital_vs_reference = 0.0;
  double analog_vs_digital = 0.0;
};

struct ModeComparison {
  std::vector<LayerErrors> per_layer;      // mean over sequences, chained outputs
  double end_to_end_digital_vs_reference = 0.0;
  double end_to_end_analog_vs_digital = 0.0;
  double max_abs_analog_vs_digital = 0.0;  // over every layer output
  double top1_digital_vs_reference = 0.0;  // agreement fractions
  double top1_analog_vs_digital = 0.0;
  AnalogDiagnostics diag;
  std::size_t sequences = 0;
};

nlohmann::json to_json(const ModeComparison& c);

ModeComparison compare_modes(const EncoderModel& model, const std::vector<Matrix<double>>& inputs,
                             const ExecutionMode& analog);

}  // namespace mxsim
