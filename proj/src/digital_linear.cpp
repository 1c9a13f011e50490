// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/digital_linear.hpp"

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mxsim/dyadic.hpp"
#include "mxsim/parallel.hpp"

namespace mxsim {

void check_linear_operands(const MxTensor& x, const MxTensor& w) {
  if (x.orientation() != Orientation::kRowMajor) {
    throw std::invalid_argument("linear: activations must be row-major blocked");
  }
  if (w.orientation() != Orientation::kColumnMajor) {
    throw std::invalid_argument("linear: weights must be column-major blocked");
  }
  if (x.cols() != w.rows()) {
    throw std::invalid_argument("linear: reduction dims differ (" + std::to_string(x.cols()) +
                                " vs " + std::to_string(w.rows()) + ")");
  }
}

namespace {

// Signed twice-magnitudes of a block: element value = code/2 * 2^scale.
std::array<std::int8_t, kBlockSize> twice_values(const MxBlock& b) {
  std::array<std::int8_t, kBlockSize> out{};
  for (int i = 0; i < kBlockSize; ++i) {
    const auto t = static_cast<std::int8_t>(fp4_twice_magnitude(b.elements[i]));
    out[i] = b.elements[i].sign() ? static_cast<std::int8_t>(-t) : t;
  }
  return out;
}

}  // namespace

Matrix<double> digital_linear(const MxTensor& x, const MxTensor& w) {
  check_linear_operands(x, w);
  const std::size_t blocks = x.block_cols();
  std::vector<std::array<std::int8_t, kBlockSize>> wt(blocks * w.cols());
  for (std::size_t b = 0; b < blocks; ++b)
    for (std::size_t c = 0; c < w.cols(); ++c) wt[c * blocks + b] = twice_values(w.block(b, c));
  Matrix<double> out(x.rows(), w.cols());
  parallel_for(x.rows(), [&](std::size_t r) {
    std::vector<std::array<std::int8_t, kBlockSize>> xt(blocks);
    for (std::size_t b = 0; b < blocks; ++b) xt[b] = twice_values(x.block(r, b));
    for (std::size_t c = 0; c < w.cols(); ++c) {
      // Each block dot is an exact integer (|.| <= 32 * 12 * 12).
      DyadicSum acc;
      for (std::size_t b = 0; b < blocks; ++b) {
        const auto& xs = xt[b];
        const auto& ws = wt[c * blocks + b];
        std::int32_t dot = 0;
        for (int i = 0; i < kBlockSize; ++i) dot += std::int32_t{xs[i]} * ws[i];
        acc.add(dot, x.block(r, b).scale.exponent() + w.block(b, c).scale.exponent() - 2);
      }
      out(r, c) = acc.to_double();
    }
  });
  return out;
}

}  // namespace mxsim
