// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/mx_tensor.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace mxsim {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

}  // namespace

MxTensor::MxTensor(std::size_t rows, std::size_t cols, Orientation orientation)
    : rows_(rows), cols_(cols), orientation_(orientation) {
  if (orientation == Orientation::kRowMajor) {
    block_rows_ = rows;
    block_cols_ = ceil_div(cols, kBlockSize);
  } else {
    block_rows_ = ceil_div(rows, kBlockSize);
    block_cols_ = cols;
  }
  blocks_.assign(block_rows_ * block_cols_, MxBlock{});
}

namespace {

// Gathers the 32 (zero-padded) source values of block (br, bc).
template <typename T, typename Zero>
std::array<T, kBlockSize> gather(const Matrix<T>& m, Orientation o, std::size_t br,
                                 std::size_t bc, Zero zero) {
  std::array<T, kBlockSize> v;
  v.fill(zero);
  for (int i = 0; i < kBlockSize; ++i) {
    if (o == Orientation::kRowMajor) {
      const std::size_t c = bc * kBlockSize + i;
      if (c < m.cols()) v[i] = m(br, c);
    } else {
      const std::size_t r = br * kBlockSize + i;
      if (r < m.rows()) v[i] = m(r, bc);
    }
  }
  return v;
}

}  // namespace

MxTensor MxTensor::quantize(const Matrix<double>& m, Orientation orientation, QuantStats* stats) {
  MxTensor t(m.rows(), m.cols(), orientation);
  for (std::size_t br = 0; br < t.block_rows_; ++br) {
    for (std::size_t bc = 0; bc < t.block_cols_; ++bc) {
      const auto v = gather(m, orientation, br, bc, 0.0);
      t.block(br, bc) = quantize_block(std::span<const double, kBlockSize>(v), stats);
    }
  }
  return t;
}

MxTensor MxTensor::quantize_bf16(const Matrix<Bf16>& m, Orientation orientation) {
  MxTensor t(m.rows(), m.cols(), orientation);
  for (std::size_t br = 0; br < t.block_rows_; ++br) {
    for (std::size_t bc = 0; bc < t.block_cols_; ++bc) {
      const auto v = gather(m, orientation, br, bc, Bf16::zero());
      t.block(br, bc) = bf16_to_mx_block(std::span<const Bf16, kBlockSize>(v));
    }
  }
  return t;
}

const MxBlock& MxTensor::block_of(std::size_t r, std::size_t c) const {
  if (orientation_ == Orientation::kRowMajor) return block(r, c / kBlockSize);
  return block(r / kBlockSize, c);
}

int MxTensor::index_in_block(std::size_t r, std::size_t c) const {
  return static_cast<int>((orientation_ == Orientation::kRowMajor ? c : r) % kBlockSize);
}

Fp4Code MxTensor::element(std::size_t r, std::size_t c) const {
  return block_of(r, c).elements[index_in_block(r, c)];
}

E8m0Scale MxTensor::scale(std::size_t r, std::size_t c) const { return block_of(r, c).scale; }

double MxTensor::value(std::size_t r, std::size_t c) const {
  const MxBlock& b = block_of(r, c);
  return std::ldexp(fp4_decode(b.elements[index_in_block(r, c)]), b.scale.exponent());
}

Matrix<double> MxTensor::dequantize() const {
  Matrix<double> out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(r, c) = value(r, c);
  return out;
}

MxTensor MxTensor::slice(std::size_t row_begin, std::size_t row_count, std::size_t col_begin,
                         std::size_t col_count) const {
  if (row_begin + row_count > rows_ || col_begin + col_count > cols_) {
    throw std::out_of_range("MxTensor::slice: range exceeds tensor");
  }
  const bool row_major = orientation_ == Orientation::kRowMajor;
  const std::size_t axis_begin = row_major ? col_begin : row_begin;
  if (axis_begin % kBlockSize != 0) {
    throw std::invalid_argument("MxTensor::slice: blocked-axis start must be 32-aligned");
  }
  MxTensor out(row_count, col_count, orientation_);
  const std::size_t br0 = row_major ? row_begin : row_begin / kBlockSize;
  const std::size_t bc0 = row_major ? col_begin / kBlockSize : col_begin;
  for (std::size_t br = 0; br < out.block_rows_; ++br) {
    for (std::size_t bc = 0; bc < out.block_cols_; ++bc) {
      MxBlock b = block(br0 + br, bc0 + bc);
      // Elements that fall past the end of the slice become padding.
      const std::size_t axis_len = row_major ? col_count : row_count;
      const std::size_t base = (row_major ? bc : br) * kBlockSize;
      for (int i = 0; i < kBlockSize; ++i) {
        if (base + i >= axis_len) b.elements[i] = Fp4Code(0);
      }
      out.block(br, bc) = b;
    }
  }
  return out;
}

MxTensor MxTensor::transposed() const {
  const Orientation flipped =
      orientation_ == Orientation::kRowMajor ? Orientation::kColumnMajor : Orientation::kRowMajor;
  MxTensor out(cols_, rows_, flipped);
  for (std::size_t br = 0; br < block_rows_; ++br)
    for (std::size_t bc = 0; bc < block_cols_; ++bc) out.block(bc, br) = block(br, bc);
  return out;
}

}  // namespace mxsim
