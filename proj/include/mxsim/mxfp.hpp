// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "mxsim/bf16.hpp"

namespace mxsim {

inline constexpr int kBlockSize = 32;

// E2M1 element: bit 3 sign, bits 2..1 exponent (bias 1), bit 0 mantissa.
class Fp4Code {
 public:
  constexpr Fp4Code() = default;
  constexpr explicit Fp4Code(std::uint8_t bits) : bits_(bits & 0x0F) {}

  [[nodiscard]] constexpr std::uint8_t bits() const { return bits_; }
  [[nodiscard]] constexpr bool sign() const { return (bits_ & 0x8) != 0; }
  [[nodiscard]] constexpr int exponent_field() const { return (bits_ >> 1) & 0x3; }
  [[nodiscard]] constexpr int mantissa_field() const { return bits_ & 0x1; }
  [[nodiscard]] constexpr bool is_zero() const { return (bits_ & 0x7) == 0; }

  friend constexpr bool operator==(Fp4Code, Fp4Code) = default;

 private:
  std::uint8_t bits_ = 0;
};

// E8M0 shared scale: value 2^(code - 127). All 256 codes are plain exponents.
class E8m0Scale {
 public:
  static constexpr int kBias = 127;

  constexpr E8m0Scale() = default;
  constexpr explicit E8m0Scale(std::uint8_t code) : code_(code) {}
  static constexpr E8m0Scale from_exponent(int e) {
    return E8m0Scale(static_cast<std::uint8_t>(e + kBias));
  }

  [[nodiscard]] constexpr std::uint8_t code() const { return code_; }
  [[nodiscard]] constexpr int exponent() const { return int{code_} - kBias; }
  [[nodiscard]] double value() const;

  friend constexpr bool operator==(E8m0Scale, E8m0Scale) = default;

 private:
  std::uint8_t code_ = kBias;
};

struct MxBlock {
  std::array<Fp4Code, kBlockSize> elements{};
  E8m0Scale scale{};

  friend bool operator==(const MxBlock&, const MxBlock&) = default;
};

// Counters filled by the quantizers when a caller asks for them.
struct QuantStats {
  std::uint64_t blocks = 0;
  std::uint64_t saturated_elements = 0;  // |v / scale| > 6 clamped to 6
  std::uint64_t scale_clamps = 0;        // block exponent outside E8M0 range
  int max_scale_exponent = -128;

  void merge(const QuantStats& o);
};

double fp4_decode(Fp4Code code);
// Nearest E2M1 value, ties to even mantissa, saturating at +-6; -0 -> +0.
Fp4Code fp4_encode(double x);
// Twice the decoded magnitude: {0,1,2,3,4,6,8,12}.
int fp4_twice_magnitude(Fp4Code code);

// Software-style quantizer: scale 2^(floor(log2 max|v|) - 2), nearest FP4.
MxBlock quantize_block(std::span<const double, kBlockSize> v, QuantStats* stats = nullptr);
std::array<double, kBlockSize> dequantize_block(const MxBlock& b);
int block_scale_exponent(double max_abs);

struct Bf16Conversion {
  Bf16 value;
  bool saturated = false;
};

// Field-level element * scale -> BF16 conversion.
Bf16Conversion mx_to_bf16(Fp4Code element, E8m0Scale scale);

// Hardware-style quantizer: shared scale as in quantize_block, private
// mantissas by right-shift truncation of the BF16 mantissa field.
MxBlock bf16_to_mx_block(std::span<const Bf16, kBlockSize> v);

enum class Int5Kind { kWeight, kActivation };
inline constexpr int kWeightBias = 12;

// weight: 2v + 12 in [0,24]; activation: 2v in [-12,12].
std::array<std::int8_t, kBlockSize> int5_encode(const MxBlock& block, Int5Kind kind);
std::int8_t int5_encode_element(Fp4Code code, Int5Kind kind);
double int5_decode_element(int code, Int5Kind kind);

// PE multiply-and-pack: exact FP4 x FP4 product times both block scales,
// packed into a BF16 value.
Bf16Conversion pe_product_pack(Fp4Code x, Fp4Code w, E8m0Scale sx, E8m0Scale sw);

}  // namespace mxsim
