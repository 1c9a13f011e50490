// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mxsim/matrix.hpp"
#include "mxsim/mx_tensor.hpp"

namespace mxsim {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// MXT1: "MXT1", rows u32, cols u32, orientation u8, then per block (row-major
// block order) 16 bytes of packed FP4 codes (element 2i in the low nibble,
// 2i+1 in the high nibble) followed by one E8M0 scale byte. Little-endian.
std::vector<std::uint8_t> encode_mxt1(const MxTensor& t);
MxTensor decode_mxt1(const std::vector<std::uint8_t>& bytes);

// F64M: "F64M", rows u32, cols u32, then row-major little-endian doubles.
std::vector<std::uint8_t> encode_f64m(const Matrix<double>& m);
Matrix<double> decode_f64m(const std::vector<std::uint8_t>& bytes);

void write_mxt1(const std::filesystem::path& path, const MxTensor& t);
MxTensor read_mxt1(const std::filesystem::path& path);
void write_f64m(const std::filesystem::path& path, const Matrix<double>& m);
Matrix<double> read_f64m(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace mxsim
