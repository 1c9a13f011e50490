// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <climits>
#include <cmath>
#include <random>

#include "mxsim/matrix.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim::testing {

// Gaussian entries whose magnitude drifts by up to +-drift binades per
// 32-element segment, so block exponents spread across several binades.
inline Matrix<double> drifting_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                      int drift, bool drift_along_rows) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<int> d(-drift, drift);
  Matrix<double> m(rows, cols);
  const std::size_t segs = ((drift_along_rows ? rows : cols) + 31) / 32;
  const std::size_t others = drift_along_rows ? cols : rows;
  std::vector<int> shift(segs * others);
  for (int& s : shift) s = d(rng);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t seg = (drift_along_rows ? r : c) / 32;
      const std::size_t other = drift_along_rows ? c : r;
      m(r, c) = std::ldexp(n(rng), shift[seg * others + other]);
    }
  }
  return m;
}

struct RandomLinear {
  MxTensor x;  // rows x in, row-major
  MxTensor w;  // in x out, column-major
};

inline RandomLinear random_linear(std::mt19937_64& rng, std::size_t rows, std::size_t in,
                                  std::size_t out, int drift) {
  RandomLinear l;
  l.x = MxTensor::quantize(drifting_matrix(rows, in, rng, drift, false), Orientation::kRowMajor);
  l.w = MxTensor::quantize(drifting_matrix(in, out, rng, drift, true), Orientation::kColumnMajor);
  return l;
}

inline bool mx_block_empty(const MxBlock& b) {
  return std::all_of(b.elements.begin(), b.elements.end(), [](Fp4Code c) { return c.is_zero(); });
}

// Largest and smallest E_X + E_W over non-empty block pairs.
inline std::pair<int, int> scale_range(const MxTensor& x, const MxTensor& w) {
  int hi = INT_MIN, lo = INT_MAX;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t b = 0; b < x.block_cols(); ++b) {
      const MxBlock& xb = x.block(r, b);
      if (mx_block_empty(xb)) continue;
      for (std::size_t c = 0; c < w.cols(); ++c) {
        const MxBlock& wb = w.block(b, c);
        if (mx_block_empty(wb)) continue;
        const int s = xb.scale.exponent() + wb.scale.exponent();
        hi = std::max(hi, s);
        lo = std::min(lo, s);
      }
    }
  }
  return {hi, lo};
}

}  // namespace mxsim::testing
