// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <limits>

namespace mxsim {

// bfloat16 value: 1 sign bit, 8 exponent bits (bias 127), 7 mantissa bits.
//
// Every arithmetic result is the exact result rounded to nearest-even.
// Overflow saturates to the largest finite magnitude and raises the
// thread-local sticky flag; the datapath never carries Inf or NaN.
class Bf16 {
 public:
  constexpr Bf16() = default;

  static constexpr Bf16 from_bits(std::uint16_t bits) {
    Bf16 b;
    b.bits_ = bits;
    return b;
  }
  static Bf16 from_double(double v);
  static Bf16 from_float(float v) { return from_double(v); }

  static constexpr Bf16 max_finite() { return from_bits(0x7F7F); }
  static constexpr Bf16 lowest() { return from_bits(0xFF7F); }
  static constexpr Bf16 min_normal() { return from_bits(0x0080); }
  static constexpr Bf16 zero() { return from_bits(0); }
  static constexpr Bf16 one() { return from_bits(0x3F80); }

  [[nodiscard]] constexpr std::uint16_t bits() const { return bits_; }
  [[nodiscard]] constexpr bool sign() const { return (bits_ >> 15) != 0; }
  [[nodiscard]] constexpr int exponent_field() const { return (bits_ >> 7) & 0xFF; }
  [[nodiscard]] constexpr int mantissa_field() const { return bits_ & 0x7F; }
  [[nodiscard]] constexpr bool is_zero() const { return (bits_ & 0x7FFF) == 0; }

  [[nodiscard]] float to_float() const {
    return std::bit_cast<float>(static_cast<std::uint32_t>(bits_) << 16);
  }
  [[nodiscard]] double to_double() const { return to_float(); }

  constexpr Bf16 operator-() const { return from_bits(bits_ ^ 0x8000); }

  friend constexpr bool operator==(Bf16 a, Bf16 b) { return a.bits_ == b.bits_; }

 private:
  std::uint16_t bits_ = 0;
};

Bf16 bf16_add(Bf16 a, Bf16 b);
Bf16 bf16_sub(Bf16 a, Bf16 b);
Bf16 bf16_mul(Bf16 a, Bf16 b);
Bf16 bf16_div(Bf16 a, Bf16 b);
Bf16 bf16_max(Bf16 a, Bf16 b);

// Distance in representable steps between two finite values of the same
// sign class; used by tolerance checks.
std::int64_t bf16_ulp_distance(Bf16 a, Bf16 b);

// Sticky overflow diagnostic, per thread.
bool bf16_overflow_flag();
void clear_bf16_flags();
void raise_bf16_overflow();

}  // namespace mxsim
