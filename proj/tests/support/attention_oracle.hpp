// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Non-streaming attention references for one head.
#pragma once

#include <cmath>

#include "mxsim/attention.hpp"
#include "mxsim/matrix.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim::oracle {

// Softmax over all keys at once, then one SV fold over all keys, then the
// division; every step in the same BF16 order the hardware uses.
inline Matrix<Bf16> one_shot_head(const Matrix<Bf16>& scaled_scores, const MxTensor& v_col_major,
                                  SoftmaxMode mode) {
  const std::size_t n = scaled_scores.rows();
  const std::size_t keys = scaled_scores.cols();
  Matrix<Bf16> p(n, keys);
  std::vector<Bf16> l(n, Bf16::zero());
  for (std::size_t r = 0; r < n; ++r) {
    Bf16 m = Bf16::lowest();
    for (std::size_t c = 0; c < keys; ++c) m = bf16_max(m, scaled_scores(r, c));
    const int k = softmax_binade(m);
    for (std::size_t c = 0; c < keys; ++c) {
      p(r, c) = mode == SoftmaxMode::kStrict
                    ? softmax_numerator(scaled_scores(r, c), k)
                    : Bf16::from_double(std::exp(bf16_sub(scaled_scores(r, c), m).to_double()));
      l[r] = bf16_add(l[r], p(r, c));
    }
  }
  const MxTensor pq = requantize_bf16(p, Orientation::kRowMajor, Rounding::kNearest);
  Matrix<Bf16> acc = systolic_gemm_mx(pq, v_col_major);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < acc.cols(); ++c) acc(r, c) = bf16_div(acc(r, c), l[r]);
  return acc;
}

// softmax(q k^T / sqrt(d_k)) v in double precision, per head.
inline Matrix<double> reference_attention(const Matrix<double>& q, const Matrix<double>& k,
                                          const Matrix<double>& v, int heads, int d_k) {
  const std::size_t n = q.rows();
  Matrix<double> out(n, q.cols());
  for (int h = 0; h < heads; ++h) {
    const std::size_t c0 = static_cast<std::size_t>(h * d_k);
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> s(n);
      double m = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) {
        double dot = 0;
        for (int c = 0; c < d_k; ++c) dot += q(i, c0 + c) * k(j, c0 + c);
        s[j] = dot / std::sqrt(static_cast<double>(d_k));
        m = std::max(m, s[j]);
      }
      double l = 0;
      for (double& x : s) {
        x = std::exp(x - m);
        l += x;
      }
      for (int c = 0; c < d_k; ++c) {
        double acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += s[j] * v(j, c0 + c);
        out(i, c0 + c) = acc / l;
      }
    }
  }
  return out;
}

}  // namespace mxsim::oracle
