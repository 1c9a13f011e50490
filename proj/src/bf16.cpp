// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/bf16.hpp"

#include <algorithm>
#include <cmath>

namespace mxsim {
namespace {

thread_local bool g_overflow = false;

constexpr double kMaxFinite = 3.3895313892515355e38;  // (2 - 2^-7) * 2^127
constexpr int kMinNormalExp = -126;
constexpr int kMantissaBits = 7;

}  // namespace

bool bf16_overflow_flag() { return g_overflow; }
void clear_bf16_flags() { g_overflow = false; }
void raise_bf16_overflow() { g_overflow = true; }

Bf16 Bf16::from_double(double v) {
  if (std::isnan(v)) {
    raise_bf16_overflow();
    return zero();
  }
  const bool neg = std::signbit(v);
  const double mag = std::fabs(v);
  if (mag == 0.0) return from_bits(neg ? 0x8000 : 0x0000);
  if (std::isinf(mag)) {
    raise_bf16_overflow();
    return neg ? lowest() : max_finite();
  }
  // Quantum of the target binade; subnormals share the min-normal quantum.
  const int e = std::max(std::ilogb(mag), kMinNormalExp);
  const int quantum_exp = e - kMantissaBits;
  const double scaled = std::ldexp(mag, -quantum_exp);  // exact
  const double steps = std::nearbyint(scaled);          // ties to even
  const double rounded = std::ldexp(steps, quantum_exp);
  if (rounded > kMaxFinite) {
    raise_bf16_overflow();
    return neg ? lowest() : max_finite();
  }
  // Every BF16 value is an exact float.
  const auto fbits = std::bit_cast<std::uint32_t>(static_cast<float>(rounded));
  const auto bits = static_cast<std::uint16_t>(fbits >> 16);
  return from_bits(neg ? static_cast<std::uint16_t>(bits | 0x8000) : bits);
}

// Operands carry 8 significant bits, so one rounding of the double result
// to BF16 equals the correctly rounded BF16 result for +, *, /.
Bf16 bf16_add(Bf16 a, Bf16 b) { return Bf16::from_double(a.to_double() + b.to_double()); }
Bf16 bf16_sub(Bf16 a, Bf16 b) { return Bf16::from_double(a.to_double() - b.to_double()); }
Bf16 bf16_mul(Bf16 a, Bf16 b) { return Bf16::from_double(a.to_double() * b.to_double()); }
Bf16 bf16_div(Bf16 a, Bf16 b) {
  if (b.is_zero()) {
    raise_bf16_overflow();
    if (a.is_zero()) return Bf16::zero();
    return (a.sign() != b.sign()) ? Bf16::lowest() : Bf16::max_finite();
  }
  return Bf16::from_double(a.to_double() / b.to_double());
}
Bf16 bf16_max(Bf16 a, Bf16 b) { return a.to_double() >= b.to_double() ? a : b; }

std::int64_t bf16_ulp_distance(Bf16 a, Bf16 b) {
  // Map to a monotone integer line: negative values mirror below zero.
  auto ordinal = [](Bf16 x) -> std::int64_t {
    const std::int64_t mag = x.bits() & 0x7FFF;
    return x.sign() ? -mag : mag;
  };
  const std::int64_t d = ordinal(a) - ordinal(b);
  return d < 0 ? -d : d;
}

}  // namespace mxsim
