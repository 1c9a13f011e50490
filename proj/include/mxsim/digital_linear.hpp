// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mxsim/matrix.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim {

// All-digital MXFP4 linear layer: y = dequant(x) * dequant(w), each dot
// product accumulated exactly and rounded once to double.
//   x: rows x in,  row-major blocked along `in`.
//   w: in x out,   column-major blocked along `in`.
Matrix<double> digital_linear(const MxTensor& x, const MxTensor& w);

// Throws std::invalid_argument unless x and w form a valid linear layer.
void check_linear_operands(const MxTensor& x, const MxTensor& w);

}  // namespace mxsim
