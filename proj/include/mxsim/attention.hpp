// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Digital attention stage: MXFP4 x MXFP4 products packed to BF16 and folded
// into output-stationary BF16 accumulators, a streaming softmax over 64-key
// tiles with a deferred normalizer, and the per-head S, P and SV choreography.
#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "mxsim/bf16.hpp"
#include "mxsim/matrix.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim {

class AttentionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SystolicGeometry {
  int pe_rows = 32;
  int pe_cols = 64;  // also the key-tile width of the softmax stream
  int arrays_per_stage = 2;

  void validate() const;
  friend bool operator==(const SystolicGeometry&, const SystolicGeometry&) = default;
};

enum class TileOrder { kRowMajor, kColumnMajor };

// out(i, j) = fold over k ascending of bf16_add(acc, pe_product_pack(...)),
// starting from +0. a is blocked along its columns, b along its rows.
Matrix<Bf16> systolic_gemm_mx(const MxTensor& a, const MxTensor& b,
                              const SystolicGeometry& geometry = {},
                              TileOrder order = TileOrder::kRowMajor);
// Continues the folds already held in acc (a.rows() x b.cols()).
void systolic_gemm_mx_accumulate(const MxTensor& a, const MxTensor& b, Matrix<Bf16>& acc);

// kStandard tracks the exact running maximum and rescales earlier tiles by
// BF16 exponentials. kStrict snaps the maximum up to a multiple of ln 2, so
// every rescaling factor is an exact power of two: the stream then equals
// the one-shot softmax bit for bit and does not depend on the tile width.
enum class SoftmaxMode { kStandard, kStrict };

struct FlashState {
  std::vector<Bf16> running_max;  // scaled scores seen so far
  std::vector<int> binade;        // kStrict: exponent k of the shift k ln 2
  std::vector<Bf16> running_sum;  // l
  std::vector<bool> started;

  explicit FlashState(std::size_t rows = 0);
  // The shift subtracted from the scores: k ln 2 (strict) or the max.
  [[nodiscard]] Bf16 shift(std::size_t row, SoftmaxMode mode) const;
};

struct SoftmaxTile {
  Matrix<Bf16> p;                 // unnormalized probabilities
  std::vector<Bf16> correction;   // factor for accumulators built so far
};

// Scores (rows x cols) of one key tile; columns at or past valid_cols are
// padding and receive probability 0.
SoftmaxTile flash_softmax_tile(const Matrix<Bf16>& scores, std::size_t valid_cols,
                               FlashState& state, Bf16 scale, SoftmaxMode mode);

// bf16(e^s * 2^-k). The result scales exactly with k, so changing k later
// is a power-of-two rescale.
Bf16 softmax_numerator(Bf16 scaled_score, int binade);
int softmax_binade(Bf16 max_scaled_score);

struct AttentionConfig {
  int heads = 1;
  int d_k = 64;
  SystolicGeometry geometry;
  SoftmaxMode softmax = SoftmaxMode::kStandard;
  Rounding output_rounding = Rounding::kNearest;
  bool keep_debug = false;

  void validate() const;
};

struct HeadDebug {
  Matrix<Bf16> scores;         // S scaled by 1/sqrt(d_k)
  Matrix<Bf16> probabilities;  // P as emitted, before the deferred division
  Matrix<Bf16> output;         // O for this head
};

struct AttentionResult {
  Matrix<Bf16> output;  // N x (heads * d_k), BF16
  MxTensor output_mx;   // row-major MXFP4
  std::vector<HeadDebug> debug;
};

// q, k: N x d_model, row-major blocked. v: N x d_model real values (e.g.
// decoded INT10), quantized per key tile column-major on ingestion.
AttentionResult attention_forward(const MxTensor& q, const MxTensor& k, const Matrix<double>& v,
                                  const AttentionConfig& cfg);

Bf16 attention_scale(int d_k);
MxTensor requantize_bf16(const Matrix<Bf16>& m, Orientation orientation, Rounding rounding);

}  // namespace mxsim
