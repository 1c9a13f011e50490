// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace mxsim {
namespace {

constexpr std::size_t kMxt1HeaderSize = 4 + 4 + 4 + 1;
constexpr std::size_t kF64mHeaderSize = 4 + 4 + 4;
constexpr std::size_t kBlockBytes = kBlockSize / 2 + 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& in, std::size_t pos) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[pos + i]) << (8 * i);
  return v;
}

void check_magic(const std::vector<std::uint8_t>& in, const char* magic, std::size_t header) {
  if (in.size() < header) throw FormatError(std::string(magic) + ": truncated header");
  if (std::memcmp(in.data(), magic, 4) != 0) throw FormatError(std::string("bad magic, expected ") + magic);
}

std::uint32_t checked_dim(std::size_t v) {
  if (v > 0xFFFFFFFFu) throw FormatError("dimension exceeds u32");
  return static_cast<std::uint32_t>(v);
}

}  // namespace

std::vector<std::uint8_t> encode_mxt1(const MxTensor& t) {
  std::vector<std::uint8_t> out = {'M', 'X', 'T', '1'};
  put_u32(out, checked_dim(t.rows()));
  put_u32(out, checked_dim(t.cols()));
  out.push_back(static_cast<std::uint8_t>(t.orientation()));
  out.reserve(out.size() + t.blocks().size() * kBlockBytes);
  for (const MxBlock& b : t.blocks()) {
    for (int i = 0; i < kBlockSize; i += 2) {
      out.push_back(static_cast<std::uint8_t>(b.elements[i].bits() | (b.elements[i + 1].bits() << 4)));
    }
    out.push_back(b.scale.code());
  }
  return out;
}

MxTensor decode_mxt1(const std::vector<std::uint8_t>& in) {
  check_magic(in, "MXT1", kMxt1HeaderSize);
  const std::uint32_t rows = get_u32(in, 4);
  const std::uint32_t cols = get_u32(in, 8);
  const std::uint8_t orient = in[12];
  if (orient > 1) throw FormatError("MXT1: invalid orientation byte");
  MxTensor t(rows, cols, static_cast<Orientation>(orient));
  const std::size_t expected = kMxt1HeaderSize + t.blocks().size() * kBlockBytes;
  if (in.size() != expected) {
    throw FormatError("MXT1: payload size " + std::to_string(in.size()) + " != expected " +
                      std::to_string(expected));
  }
  std::size_t pos = kMxt1HeaderSize;
  for (MxBlock& b : t.blocks()) {
    for (int i = 0; i < kBlockSize; i += 2) {
      const std::uint8_t byte = in[pos++];
      b.elements[i] = Fp4Code(byte & 0x0F);
      b.elements[i + 1] = Fp4Code(byte >> 4);
    }
    b.scale = E8m0Scale(in[pos++]);
  }
  return t;
}

std::vector<std::uint8_t> encode_f64m(const Matrix<double>& m) {
  std::vector<std::uint8_t> out = {'F', '6', '4', 'M'};
  put_u32(out, checked_dim(m.rows()));
  put_u32(out, checked_dim(m.cols()));
  for (double v : m.data()) {
    const auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
  return out;
}

Matrix<double> decode_f64m(const std::vector<std::uint8_t>& in) {
  check_magic(in, "F64M", kF64mHeaderSize);
  const std::size_t rows = get_u32(in, 4);
  const std::size_t cols = get_u32(in, 8);
  if (in.size() != kF64mHeaderSize + rows * cols * 8) throw FormatError("F64M: payload size mismatch");
  Matrix<double> m(rows, cols);
  std::size_t pos = kF64mHeaderSize;
  for (double& v : m.data()) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(in[pos + i]) << (8 * i);
    pos += 8;
    v = std::bit_cast<double>(bits);
  }
  return m;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_mxt1(const std::filesystem::path& path, const MxTensor& t) { write_file_bytes(path, encode_mxt1(t)); }
MxTensor read_mxt1(const std::filesystem::path& path) { return decode_mxt1(read_file_bytes(path)); }
void write_f64m(const std::filesystem::path& path, const Matrix<double>& m) { write_file_bytes(path, encode_f64m(m)); }
Matrix<double> read_f64m(const std::filesystem::path& path) { return decode_f64m(read_file_bytes(path)); }

}  // namespace mxsim
