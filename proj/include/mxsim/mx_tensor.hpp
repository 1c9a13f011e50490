// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mxsim/matrix.hpp"
#include "mxsim/mxfp.hpp"

namespace mxsim {

// Axis along which 32-element blocks are formed.
//   kRowMajor:    each row is split into ceil(cols/32) blocks.
//   kColumnMajor: each column is split into ceil(rows/32) blocks.
enum class Orientation : std::uint8_t { kRowMajor = 0, kColumnMajor = 1 };

enum class Rounding { kNearest, kTruncateBf16 };

// Matrix stored as MXFP4 blocks. The blocked axis is zero-padded to a
// multiple of 32; the block grid is stored in row-major block order.
class MxTensor {
 public:
  MxTensor() = default;
  MxTensor(std::size_t rows, std::size_t cols, Orientation orientation);

  static MxTensor quantize(const Matrix<double>& m, Orientation orientation,
                           QuantStats* stats = nullptr);
  // Hardware path: values are BF16 and private mantissas are truncated.
  static MxTensor quantize_bf16(const Matrix<Bf16>& m, Orientation orientation);

  [[nodiscard]] std::size_t rows() const { return rows_; }
  [[nodiscard]] std::size_t cols() const { return cols_; }
  [[nodiscard]] Orientation orientation() const { return orientation_; }

  // Block grid shape.
  [[nodiscard]] std::size_t block_rows() const { return block_rows_; }
  [[nodiscard]] std::size_t block_cols() const { return block_cols_; }
  [[nodiscard]] std::size_t blocks_along_axis() const {
    return orientation_ == Orientation::kRowMajor ? block_cols_ : block_rows_;
  }

  MxBlock& block(std::size_t br, std::size_t bc) { return blocks_[br * block_cols_ + bc]; }
  const MxBlock& block(std::size_t br, std::size_t bc) const {
    return blocks_[br * block_cols_ + bc];
  }
  // The block holding element (r, c) and the element's index in it.
  [[nodiscard]] const MxBlock& block_of(std::size_t r, std::size_t c) const;
  [[nodiscard]] int index_in_block(std::size_t r, std::size_t c) const;

  [[nodiscard]] Fp4Code element(std::size_t r, std::size_t c) const;
  [[nodiscard]] E8m0Scale scale(std::size_t r, std::size_t c) const;
  [[nodiscard]] double value(std::size_t r, std::size_t c) const;

  [[nodiscard]] Matrix<double> dequantize() const;

  std::vector<MxBlock>& blocks() { return blocks_; }
  const std::vector<MxBlock>& blocks() const { return blocks_; }

  // Sub-tensor; the start along the blocked axis must be a multiple of 32.
  [[nodiscard]] MxTensor slice(std::size_t row_begin, std::size_t row_count,
                               std::size_t col_begin, std::size_t col_count) const;

  // The transpose with the same blocks: a row-major tensor becomes a
  // column-major one and vice versa. Lossless.
  [[nodiscard]] MxTensor transposed() const;

  friend bool operator==(const MxTensor&, const MxTensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Orientation orientation_ = Orientation::kRowMajor;
  std::size_t block_rows_ = 0;
  std::size_t block_cols_ = 0;
  std::vector<MxBlock> blocks_;
};

}  // namespace mxsim
