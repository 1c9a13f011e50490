// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/attention.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "mxsim/parallel.hpp"

namespace mxsim {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

void check_gemm_operands(const MxTensor& a, const MxTensor& b) {
  if (a.orientation() != Orientation::kRowMajor || b.orientation() != Orientation::kColumnMajor) {
    throw AttentionError("systolic gemm: a must be row-major and b column-major blocked");
  }
  if (a.cols() != b.rows()) {
    throw AttentionError("systolic gemm: reduction dims differ (" + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()) + ")");
  }
}

// Folds every k of one output element into acc.
Bf16 fold_element(const MxTensor& a, const MxTensor& b, std::size_t i, std::size_t j, Bf16 acc) {
  for (std::size_t blk = 0; blk < a.block_cols(); ++blk) {
    const MxBlock& ab = a.block(i, blk);
    const MxBlock& bb = b.block(blk, j);
    const std::size_t base = blk * kBlockSize;
    const int n = static_cast<int>(std::min<std::size_t>(kBlockSize, a.cols() - base));
    for (int e = 0; e < n; ++e) {
      acc = bf16_add(acc, pe_product_pack(ab.elements[e], bb.elements[e], ab.scale, bb.scale).value);
    }
  }
  return acc;
}

Matrix<double> to_double(const Matrix<Bf16>& m) {
  return map_matrix(m, [](Bf16 v) { return v.to_double(); });
}

// Column block [c0, c0 + n) of a BF16 matrix.
Matrix<Bf16> column_slice(const Matrix<Bf16>& m, std::size_t c0, std::size_t n) {
  Matrix<Bf16> out(m.rows(), n);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < n; ++c) out(r, c) = m(r, c0 + c);
  return out;
}

}  // namespace

void SystolicGeometry::validate() const {
  if (pe_rows <= 0 || pe_cols <= 0 || arrays_per_stage <= 0) {
    throw AttentionError("systolic geometry dimensions must be positive");
  }
  if (pe_cols % kBlockSize != 0) {
    throw AttentionError("systolic pe_cols must be a multiple of 32 (whole MXFP4 blocks)");
  }
}

Matrix<Bf16> systolic_gemm_mx(const MxTensor& a, const MxTensor& b,
                              const SystolicGeometry& geometry, TileOrder order) {
  check_gemm_operands(a, b);
  geometry.validate();
  Matrix<Bf16> out(a.rows(), b.cols());
  const std::size_t tr = ceil_div(a.rows(), static_cast<std::size_t>(geometry.pe_rows));
  const std::size_t tc = ceil_div(b.cols(), static_cast<std::size_t>(geometry.pe_cols));
  // Each output element owns its accumulator, so tile order is free.
  for (std::size_t t = 0; t < tr * tc; ++t) {
    const std::size_t ti = order == TileOrder::kRowMajor ? t / tc : t % tr;
    const std::size_t tj = order == TileOrder::kRowMajor ? t % tc : t / tr;
    const std::size_t i_end = std::min(a.rows(), (ti + 1) * geometry.pe_rows);
    const std::size_t j_end = std::min(b.cols(), (tj + 1) * geometry.pe_cols);
    for (std::size_t i = ti * geometry.pe_rows; i < i_end; ++i)
      for (std::size_t j = tj * geometry.pe_cols; j < j_end; ++j)
        out(i, j) = fold_element(a, b, i, j, Bf16::zero());
  }
  return out;
}

void systolic_gemm_mx_accumulate(const MxTensor& a, const MxTensor& b, Matrix<Bf16>& acc) {
  check_gemm_operands(a, b);
  if (acc.rows() != a.rows() || acc.cols() != b.cols()) {
    throw AttentionError("systolic gemm: accumulator shape mismatch");
  }
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) acc(i, j) = fold_element(a, b, i, j, acc(i, j));
}

FlashState::FlashState(std::size_t rows)
    : running_max(rows, Bf16::lowest()),
      binade(rows, 0),
      running_sum(rows, Bf16::zero()),
      started(rows, false) {}

Bf16 FlashState::shift(std::size_t row, SoftmaxMode mode) const {
  if (mode == SoftmaxMode::kStandard) return running_max[row];
  return Bf16::from_double(binade[row] * std::numbers::ln2);
}

namespace {

constexpr int kBinadeLimit = 1 << 20;

int clamp_binade(long double v) {
  return static_cast<int>(std::clamp<long double>(v, -kBinadeLimit, kBinadeLimit));
}

}  // namespace

int softmax_binade(Bf16 max_scaled_score) {
  return clamp_binade(std::ceil(max_scaled_score.to_double() / std::numbers::ln2_v<long double>));
}

Bf16 softmax_numerator(Bf16 scaled_score, int binade) {
  // e^s = 2^j e^r with |r| <= ln2 / 2; both parts are independent of k.
  const long double s = scaled_score.to_double();
  const int j = clamp_binade(std::nearbyint(s / std::numbers::ln2_v<long double>));
  const double er = static_cast<double>(std::exp(s - j * std::numbers::ln2_v<long double>));
  return Bf16::from_double(std::ldexp(er, j - binade));
}

SoftmaxTile flash_softmax_tile(const Matrix<Bf16>& scores, std::size_t valid_cols,
                               FlashState& state, Bf16 scale, SoftmaxMode mode) {
  const std::size_t rows = scores.rows();
  if (state.running_max.size() != rows) throw AttentionError("flash state row count mismatch");
  if (valid_cols == 0 || valid_cols > scores.cols()) {
    throw AttentionError("flash tile needs at least one valid key");
  }
  SoftmaxTile t;
  t.p = Matrix<Bf16>(rows, scores.cols());
  t.correction.assign(rows, Bf16::one());
  for (std::size_t r = 0; r < rows; ++r) {
    std::vector<Bf16> scaled(scores.cols(), Bf16::lowest());
    Bf16 tile_max = Bf16::lowest();
    for (std::size_t c = 0; c < valid_cols; ++c) {
      scaled[c] = bf16_mul(scores(r, c), scale);
      tile_max = bf16_max(tile_max, scaled[c]);
    }
    const Bf16 new_max = bf16_max(state.running_max[r], tile_max);

    Bf16 l = state.running_sum[r];
    if (mode == SoftmaxMode::kStrict) {
      // new_max never decreases, so neither does k.
      const int k = softmax_binade(new_max);
      if (state.started[r] && k != state.binade[r]) {
        t.correction[r] = Bf16::from_double(std::ldexp(1.0, state.binade[r] - k));
        l = bf16_mul(l, t.correction[r]);
      }
      for (std::size_t c = 0; c < valid_cols; ++c) {
        t.p(r, c) = softmax_numerator(scaled[c], k);
        l = bf16_add(l, t.p(r, c));
      }
      state.binade[r] = k;
    } else {
      if (state.started[r]) {
        t.correction[r] = Bf16::from_double(
            std::exp(bf16_sub(state.running_max[r], new_max).to_double()));
        l = bf16_mul(l, t.correction[r]);
      }
      for (std::size_t c = 0; c < valid_cols; ++c) {
        t.p(r, c) = Bf16::from_double(std::exp(bf16_sub(scaled[c], new_max).to_double()));
        l = bf16_add(l, t.p(r, c));
      }
    }
    state.running_max[r] = new_max;
    state.running_sum[r] = l;
    state.started[r] = true;
  }
  return t;
}

void AttentionConfig::validate() const {
  geometry.validate();
  if (heads <= 0) throw AttentionError("attention: heads must be positive");
  if (d_k <= 0 || d_k % kBlockSize != 0) {
    throw AttentionError("attention: d_k must be a positive multiple of 32");
  }
}

Bf16 attention_scale(int d_k) { return Bf16::from_double(1.0 / std::sqrt(static_cast<double>(d_k))); }

MxTensor requantize_bf16(const Matrix<Bf16>& m, Orientation orientation, Rounding rounding) {
  if (rounding == Rounding::kTruncateBf16) return MxTensor::quantize_bf16(m, orientation);
  return MxTensor::quantize(to_double(m), orientation);
}

AttentionResult attention_forward(const MxTensor& q, const MxTensor& k, const Matrix<double>& v,
                                  const AttentionConfig& cfg) {
  cfg.validate();
  const std::size_t n = q.rows();
  const std::size_t d_model = static_cast<std::size_t>(cfg.heads) * cfg.d_k;
  if (q.cols() != d_model || k.cols() != d_model || v.cols() != d_model) {
    throw AttentionError("attention: operand width must equal heads * d_k = " +
                         std::to_string(d_model));
  }
  if (k.rows() != n || v.rows() != n) throw AttentionError("attention: sequence lengths differ");
  if (q.orientation() != Orientation::kRowMajor || k.orientation() != Orientation::kRowMajor) {
    throw AttentionError("attention: Q and K must be row-major blocked along d_k");
  }
  if (n == 0) throw AttentionError("attention: empty sequence");

  const std::size_t dk = static_cast<std::size_t>(cfg.d_k);
  const std::size_t tile = static_cast<std::size_t>(cfg.geometry.pe_cols);
  const std::size_t tiles = ceil_div(n, tile);
  const Bf16 scale = attention_scale(cfg.d_k);

  AttentionResult result;
  result.output = Matrix<Bf16>(n, d_model);
  if (cfg.keep_debug) result.debug.resize(static_cast<std::size_t>(cfg.heads));

  parallel_for(static_cast<std::size_t>(cfg.heads), [&](std::size_t h) {
    const std::size_t c0 = h * dk;
    const MxTensor qh = q.slice(0, n, c0, dk);
    const MxTensor kh_t = k.slice(0, n, c0, dk).transposed();  // d_k x N, column-major
    Matrix<double> vh(n, dk);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < dk; ++c) vh(r, c) = v(r, c0 + c);
    // Blocks along the key axis; 64-key tiles hold whole blocks.
    const MxTensor vq = MxTensor::quantize(vh, Orientation::kColumnMajor);

    const Matrix<Bf16> s = systolic_gemm_mx(qh, kh_t, cfg.geometry);
    FlashState state(n);
    Matrix<Bf16> acc(n, dk);
    Matrix<Bf16> p_all(cfg.keep_debug ? n : 0, cfg.keep_debug ? n : 0);

    for (std::size_t t = 0; t < tiles; ++t) {
      const std::size_t k0 = t * tile;
      const std::size_t valid = std::min(tile, n - k0);
      SoftmaxTile st = flash_softmax_tile(column_slice(s, k0, valid), valid, state, scale,
                                          cfg.softmax);
      for (std::size_t r = 0; r < n; ++r) {
        if (st.correction[r] == Bf16::one()) continue;
        for (std::size_t c = 0; c < dk; ++c) acc(r, c) = bf16_mul(acc(r, c), st.correction[r]);
      }
      // P is quantized with blocks along the key axis, matching V's blocks.
      const MxTensor pq = requantize_bf16(st.p, Orientation::kRowMajor, Rounding::kNearest);
      systolic_gemm_mx_accumulate(pq, vq.slice(k0, valid, 0, dk), acc);
      if (cfg.keep_debug) {
        for (std::size_t r = 0; r < n; ++r)
          for (std::size_t c = 0; c < valid; ++c) p_all(r, k0 + c) = st.p(r, c);
      }
    }

    // Deferred normalizer.
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < dk; ++c)
        result.output(r, c0 + c) = bf16_div(acc(r, c), state.running_sum[r]);

    if (cfg.keep_debug) {
      HeadDebug& d = result.debug[h];
      d.scores = map_matrix(s, [&](Bf16 x) { return bf16_mul(x, scale); });
      d.probabilities = std::move(p_all);
      d.output = column_slice(result.output, c0, dk);
    }
  });

  result.output_mx = requantize_bf16(result.output, Orientation::kRowMajor, cfg.output_rounding);
  return result;
}

}  // namespace mxsim
