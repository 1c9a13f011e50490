// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/mxfp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

namespace mxsim {
namespace {

// Magnitudes of codes 0..7.
constexpr std::array<double, 8> kE2m1Magnitudes = {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 6.0};
constexpr int kE2m1Bias = 1;  // B_P
constexpr int kScaleMinExp = -127;
constexpr int kScaleMaxExp = 128;
constexpr int kBf16ExpBias = 127;

Bf16 pack_bf16_fields(bool sign, int exp_field, int mant_field) {
  const auto bits = static_cast<std::uint16_t>((sign ? 0x8000 : 0) | (exp_field << 7) | mant_field);
  return Bf16::from_bits(bits);
}

Bf16Conversion saturated(bool sign) {
  raise_bf16_overflow();
  return {sign ? Bf16::lowest() : Bf16::max_finite(), true};
}

// Clamp a block exponent into the E8M0 range.
int clamp_scale_exponent(int e, QuantStats* stats) {
  const int clamped = std::clamp(e, kScaleMinExp, kScaleMaxExp);
  if (clamped != e && stats != nullptr) ++stats->scale_clamps;
  return clamped;
}

}  // namespace

double E8m0Scale::value() const { return std::ldexp(1.0, exponent()); }

void QuantStats::merge(const QuantStats& o) {
  blocks += o.blocks;
  saturated_elements += o.saturated_elements;
  scale_clamps += o.scale_clamps;
  max_scale_exponent = std::max(max_scale_exponent, o.max_scale_exponent);
}

double fp4_decode(Fp4Code code) {
  const double mag = kE2m1Magnitudes[code.bits() & 0x7];
  return code.sign() ? -mag : mag;
}

int fp4_twice_magnitude(Fp4Code code) {
  static constexpr std::array<int, 8> kTwice = {0, 1, 2, 3, 4, 6, 8, 12};
  return kTwice[code.bits() & 0x7];
}

Fp4Code fp4_encode(double x) {
  const double mag = std::fabs(x);
  std::uint8_t best = 7;
  if (mag < 6.0) {
    best = 0;
    for (std::uint8_t c = 1; c < 8; ++c) {
      const double d_new = std::fabs(mag - kE2m1Magnitudes[c]);
      const double d_best = std::fabs(mag - kE2m1Magnitudes[best]);
      // Ties go to the even mantissa bit.
      if (d_new < d_best || (d_new == d_best && (c & 1) == 0)) best = c;
    }
  }
  if (best == 0) return Fp4Code(0);
  return Fp4Code(static_cast<std::uint8_t>((x < 0 ? 0x8 : 0) | best));
}

int block_scale_exponent(double max_abs) {
  if (max_abs == 0.0) return 0;
  return std::ilogb(max_abs) - 2;
}

MxBlock quantize_block(std::span<const double, kBlockSize> v, QuantStats* stats) {
  double max_abs = 0.0;
  for (double x : v) max_abs = std::max(max_abs, std::fabs(x));

  MxBlock out;
  const int e = clamp_scale_exponent(block_scale_exponent(max_abs), stats);
  out.scale = E8m0Scale::from_exponent(e);
  for (int i = 0; i < kBlockSize; ++i) {
    const double scaled = std::ldexp(v[i], -e);
    if (std::fabs(scaled) > 6.0 && stats != nullptr) ++stats->saturated_elements;
    out.elements[i] = fp4_encode(scaled);
  }
  if (stats != nullptr) {
    ++stats->blocks;
    if (max_abs != 0.0) stats->max_scale_exponent = std::max(stats->max_scale_exponent, e);
  }
  return out;
}

std::array<double, kBlockSize> dequantize_block(const MxBlock& b) {
  std::array<double, kBlockSize> out{};
  const int e = b.scale.exponent();
  for (int i = 0; i < kBlockSize; ++i) out[i] = std::ldexp(fp4_decode(b.elements[i]), e);
  return out;
}

Bf16Conversion mx_to_bf16(Fp4Code element, E8m0Scale scale) {
  if (element.is_zero()) return {Bf16::zero(), false};
  const bool sign = element.sign();
  const int ep = element.exponent_field();
  // Subnormal 0.5 normalizes to 1.0 x 2^-1, i.e. an empty mantissa.
  const int exp_field = int{scale.code()} + ep - kE2m1Bias;
  const int mant_field = (ep == 0) ? 0 : (element.mantissa_field() << 6);
  if (exp_field >= 0xFF) return saturated(sign);
  if (exp_field <= 0) {
    return {Bf16::from_double(std::ldexp(fp4_decode(element), scale.exponent())), false};
  }
  return {pack_bf16_fields(sign, exp_field, mant_field), false};
}

MxBlock bf16_to_mx_block(std::span<const Bf16, kBlockSize> v) {
  // Unbiased exponent and 7-bit fraction of each nonzero element.
  std::array<int, kBlockSize> exps{};
  std::array<int, kBlockSize> fracs{};
  int max_exp = std::numeric_limits<int>::min();
  for (int i = 0; i < kBlockSize; ++i) {
    if (v[i].is_zero()) continue;
    const int ef = v[i].exponent_field();
    const int mf = v[i].mantissa_field();
    if (ef != 0) {
      exps[i] = ef - kBf16ExpBias;
      fracs[i] = mf;
    } else {
      const int lead = std::bit_width(static_cast<unsigned>(mf)) - 1;
      exps[i] = lead - 133;
      fracs[i] = (mf << (7 - lead)) & 0x7F;
    }
    max_exp = std::max(max_exp, exps[i]);
  }

  MxBlock out;
  if (max_exp == std::numeric_limits<int>::min()) return out;  // all zero, scale 2^0

  const int e = clamp_scale_exponent(max_exp - 2, nullptr);
  out.scale = E8m0Scale::from_exponent(e);
  for (int i = 0; i < kBlockSize; ++i) {
    if (v[i].is_zero()) continue;
    const int ep = exps[i] - e + kE2m1Bias;  // E_X + E_P <- E_BF + B_P
    std::uint8_t mag = 0;
    if (ep > 3) {
      mag = 7;  // only reachable when the scale was clamped
    } else if (ep >= 1) {
      mag = static_cast<std::uint8_t>((ep << 1) | (fracs[i] >> 6));  // M_P <- M_BF >> 6
    } else if (ep == 0) {
      mag = 1;  // 1.f x 2^(e-1) truncates to the FP4 subnormal
    }
    if (mag != 0) out.elements[i] = Fp4Code(static_cast<std::uint8_t>((v[i].sign() ? 0x8 : 0) | mag));
  }
  return out;
}

std::int8_t int5_encode_element(Fp4Code code, Int5Kind kind) {
  const int twice = fp4_twice_magnitude(code);
  const int signed_twice = code.sign() ? -twice : twice;
  return static_cast<std::int8_t>(kind == Int5Kind::kWeight ? signed_twice + kWeightBias
                                                            : signed_twice);
}

double int5_decode_element(int code, Int5Kind kind) {
  return kind == Int5Kind::kWeight ? (code - kWeightBias) / 2.0 : code / 2.0;
}

std::array<std::int8_t, kBlockSize> int5_encode(const MxBlock& block, Int5Kind kind) {
  std::array<std::int8_t, kBlockSize> out{};
  for (int i = 0; i < kBlockSize; ++i) out[i] = int5_encode_element(block.elements[i], kind);
  return out;
}

Bf16Conversion pe_product_pack(Fp4Code x, Fp4Code w, E8m0Scale sx, E8m0Scale sw) {
  // (2|x|)(2|w|) <= 144 fits in 8 bits; the odd parts are 1, 3 or 9, so the
  // normalized product needs at most 4 mantissa bits and never rounds.
  const unsigned prod = static_cast<unsigned>(fp4_twice_magnitude(x) * fp4_twice_magnitude(w));
  if (prod == 0) return {Bf16::zero(), false};
  const bool sign = x.sign() != w.sign();
  const int lead = std::bit_width(prod) - 1;
  // -2 removes the two factors of 2 from the twice-magnitudes; one bias is
  // removed because the two scale codes each carry one.
  const int exp_field = lead - 2 + int{sx.code()} + int{sw.code()} - E8m0Scale::kBias;
  const int mant_field = static_cast<int>((prod << (7 - lead)) & 0x7F);
  if (exp_field >= 0xFF) return saturated(sign);
  if (exp_field <= 0) {
    const double v = std::ldexp(static_cast<double>(prod), sx.exponent() + sw.exponent() - 2);
    return {Bf16::from_double(sign ? -v : v), false};
  }
  return {pack_bf16_fields(sign, exp_field, mant_field), false};
}

}  // namespace mxsim
