// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "mxsim/mxfp.hpp"
#include "support/oracles.hpp"

using namespace mxsim;

TEST_SUITE("mxfp") {

TEST_CASE("fp4 decode matches the E2M1 field formula for all 16 codes") {
  for (std::uint8_t c = 0; c < 16; ++c) {
    CHECK(fp4_decode(Fp4Code(c)) == oracle::e2m1_value(c));
  }
  CHECK(fp4_decode(Fp4Code(0b0000)) == 0.0);
  CHECK(fp4_decode(Fp4Code(0b0111)) == 6.0);
  CHECK(fp4_decode(Fp4Code(0b1001)) == -0.5);
}

TEST_CASE("fp4 encode is brute-force nearest with even-mantissa ties") {
  CHECK(fp4_decode(fp4_encode(1.25)) == 1.0);
  CHECK(fp4_encode(100.0) == Fp4Code(0b0111));
  CHECK(fp4_encode(-100.0) == Fp4Code(0b1111));
  CHECK(fp4_encode(-0.5) == Fp4Code(0b1001));
  CHECK(fp4_encode(-0.0) == Fp4Code(0));
  CHECK(fp4_encode(-0.1) == Fp4Code(0));

  // Every quarter step and every midpoint in [-7, 7].
  for (int q = -56; q <= 56; ++q) {
    const double x = q / 8.0;
    CHECK_MESSAGE(fp4_encode(x).bits() == oracle::e2m1_nearest(x), "x=" << x);
  }
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-8.0, 8.0);
  for (int i = 0; i < 20000; ++i) {
    const double x = u(rng);
    REQUIRE(fp4_encode(x).bits() == oracle::e2m1_nearest(x));
  }
}

TEST_CASE("encode of decode is the identity with +0 canonical") {
  for (std::uint8_t c = 0; c < 16; ++c) {
    const Fp4Code back = fp4_encode(fp4_decode(Fp4Code(c)));
    CHECK(back == (c == 8 ? Fp4Code(0) : Fp4Code(c)));
  }
}

TEST_CASE("quantize_block scale rule and exact examples") {
  std::array<double, 32> v{};
  MxBlock b = quantize_block(v);
  CHECK(b.scale.code() == 127);
  for (auto e : b.elements) CHECK(e == Fp4Code(0));

  v[0] = 96.0;
  b = quantize_block(v);
  CHECK(b.scale.exponent() == 4);
  CHECK(fp4_decode(b.elements[0]) == 6.0);
  CHECK(dequantize_block(b)[0] == 96.0);

  v.fill(1.0);
  b = quantize_block(v);
  CHECK(b.scale.exponent() == -2);
  for (double d : dequantize_block(b)) CHECK(d == 1.0);
}

TEST_CASE("quantize_block counts element saturation") {
  std::array<double, 32> v{};
  v[0] = 7.5;  // scale 2^0; 7.5 > 6 saturates
  QuantStats s;
  const MxBlock b = quantize_block(v, &s);
  CHECK(s.saturated_elements == 1);
  CHECK(fp4_decode(b.elements[0]) == 6.0);
  CHECK(s.blocks == 1);
}

TEST_CASE("quantization is idempotent on the MXFP4 grid") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 2000; ++trial) {
    MxBlock b;
    for (auto& e : b.elements) e = Fp4Code(static_cast<std::uint8_t>(rng() & 0xF));
    b.scale = E8m0Scale::from_exponent(static_cast<int>(rng() % 60) - 30);
    const auto d = dequantize_block(b);
    QuantStats s;
    const auto d2 = dequantize_block(quantize_block(d, &s));
    REQUIRE(s.saturated_elements == 0);
    for (int i = 0; i < 32; ++i) REQUIRE(d2[i] == d[i]);
  }
}

TEST_CASE("mx_to_bf16 equals the exact real product") {
  CHECK(mx_to_bf16(Fp4Code(0b0011), E8m0Scale::from_exponent(0)).value.to_double() == 1.5);
  CHECK(mx_to_bf16(Fp4Code(0), E8m0Scale::from_exponent(40)).value.bits() == 0);
  CHECK(mx_to_bf16(Fp4Code(0b0111), E8m0Scale::from_exponent(10)).value.to_double() == 6144.0);
  for (int e = -120; e <= 120; ++e) {
    for (std::uint8_t c = 0; c < 16; ++c) {
      const auto r = mx_to_bf16(Fp4Code(c), E8m0Scale::from_exponent(e));
      REQUIRE_FALSE(r.saturated);
      REQUIRE(r.value.to_double() == std::ldexp(oracle::e2m1_value(c), e));
    }
  }
  clear_bf16_flags();
  const auto big = mx_to_bf16(Fp4Code(0b0111), E8m0Scale(255));
  CHECK(big.saturated);
  CHECK(big.value == Bf16::max_finite());
  CHECK(bf16_overflow_flag());
  clear_bf16_flags();
}

TEST_CASE("bf16_to_mx_block inverts mx_to_bf16 on canonical blocks") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 3000; ++trial) {
    MxBlock b;
    for (auto& e : b.elements) {
      e = Fp4Code(static_cast<std::uint8_t>(rng() & 0xF));
      if (e.bits() == 8) e = Fp4Code(0);
    }
    // Canonical blocks have a maximal element in [4, 6].
    b.elements[rng() % 32] = Fp4Code(static_cast<std::uint8_t>(6 + (rng() & 1) + (rng() & 8)));
    b.scale = E8m0Scale::from_exponent(static_cast<int>(rng() % 200) - 100);
    std::array<Bf16, 32> v;
    for (int i = 0; i < 32; ++i) v[i] = mx_to_bf16(b.elements[i], b.scale).value;
    REQUIRE(bf16_to_mx_block(v) == b);
  }
}

TEST_CASE("bf16_to_mx_block truncates private mantissas") {
  std::array<Bf16, 32> v{};
  v[0] = Bf16::from_double(1.75);
  const MxBlock b = bf16_to_mx_block(v);
  CHECK(std::ldexp(fp4_decode(b.elements[0]), b.scale.exponent()) == 1.5);

  std::array<Bf16, 32> z{};
  CHECK(bf16_to_mx_block(z) == MxBlock{});

  // Nearest would round 2.9 up to 3; truncation keeps 2.
  v[0] = Bf16::from_double(4.0);
  v[1] = Bf16::from_double(2.9);
  const MxBlock t = bf16_to_mx_block(v);
  CHECK(fp4_decode(t.elements[1]) == 2.0);
}

TEST_CASE("int5 encodings are the forced affine maps and lossless") {
  MxBlock b;
  b.elements[0] = fp4_encode(-6.0);
  b.elements[1] = fp4_encode(6.0);
  b.elements[2] = fp4_encode(0.0);
  b.elements[3] = fp4_encode(-0.5);
  const auto w = int5_encode(b, Int5Kind::kWeight);
  const auto a = int5_encode(b, Int5Kind::kActivation);
  CHECK(w[0] == 0);
  CHECK(w[1] == 24);
  CHECK(w[2] == 12);
  CHECK(a[1] == 12);
  CHECK(a[3] == -1);
  for (std::uint8_t c = 0; c < 16; ++c) {
    for (auto kind : {Int5Kind::kWeight, Int5Kind::kActivation}) {
      const int code = int5_encode_element(Fp4Code(c), kind);
      CHECK(int5_decode_element(code, kind) == oracle::e2m1_value(c));
      if (kind == Int5Kind::kWeight) {
        CHECK(code >= 0);
        CHECK(code <= 24);
      } else {
        CHECK(code >= -12);
        CHECK(code <= 12);
      }
    }
  }
}

TEST_CASE("pe_product_pack is exact for all code pairs across scales") {
  CHECK(pe_product_pack(fp4_encode(1.5), fp4_encode(1.5), E8m0Scale(127), E8m0Scale(127))
            .value.to_double() == 2.25);
  CHECK(pe_product_pack(Fp4Code(0), fp4_encode(6), E8m0Scale(127), E8m0Scale(127)).value.bits() ==
        0);
  CHECK(pe_product_pack(fp4_encode(6), fp4_encode(6), E8m0Scale::from_exponent(2),
                        E8m0Scale::from_exponent(1))
            .value.to_double() == 288.0);
  for (int ex = -20; ex <= 20; ++ex) {
    for (int ew = -20; ew <= 20; ++ew) {
      for (std::uint8_t x = 0; x < 16; ++x) {
        for (std::uint8_t w = 0; w < 16; ++w) {
          const auto r = pe_product_pack(Fp4Code(x), Fp4Code(w), E8m0Scale::from_exponent(ex),
                                         E8m0Scale::from_exponent(ew));
          const double want = oracle::e2m1_value(x) * oracle::e2m1_value(w) * std::ldexp(1.0, ex + ew);
          REQUIRE(r.value.to_double() == want);
        }
      }
    }
  }
}

TEST_CASE("pe_product_pack saturates out of range") {
  clear_bf16_flags();
  const auto r = pe_product_pack(fp4_encode(6), fp4_encode(-6), E8m0Scale(254), E8m0Scale(254));
  CHECK(r.saturated);
  CHECK(r.value == Bf16::lowest());
  CHECK(bf16_overflow_flag());
  clear_bf16_flags();
}

}  // TEST_SUITE
