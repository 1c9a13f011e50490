// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "mxsim/dyadic.hpp"
#include "support/oracles.hpp"

using namespace mxsim;
using oracle::Rational;

namespace {

// Nearest integer to r with ties to even.
boost::multiprecision::cpp_int round_half_even(const Rational& r) {
  using boost::multiprecision::cpp_int;
  const cpp_int num = boost::multiprecision::numerator(r);
  const cpp_int den = boost::multiprecision::denominator(r);
  cpp_int q = num / den;  // truncates toward zero
  if (num < 0 && q * den != num) q -= 1;  // floor
  const Rational frac = r - Rational(q);
  if (frac > Rational(1, 2) || (frac == Rational(1, 2) && (q & 1) != 0)) q += 1;
  return q;
}

}  // namespace

TEST_SUITE("dyadic") {

TEST_CASE("random sums match rational arithmetic") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 3000; ++trial) {
    DyadicSum s;
    Rational want = 0;
    const int terms = 1 + static_cast<int>(rng() % 40);
    for (int i = 0; i < terms; ++i) {
      const auto m = static_cast<std::int64_t>(rng() % 20001) - 10000;
      const int e = static_cast<int>(rng() % 61) - 30;
      s.add(m, e);
      want += Rational(m) * oracle::pow2(e);
    }
    REQUIRE(oracle::exact(s.to_double()) == oracle::exact(static_cast<double>(want)));
    const int shift = static_cast<int>(rng() % 21) - 10;
    const auto r = s.round_to_integer(shift);
    REQUIRE(boost::multiprecision::cpp_int(r) == round_half_even(want * oracle::pow2(-shift)));
    REQUIRE(s.sign() == (want > 0 ? 1 : (want < 0 ? -1 : 0)));
    const int pe = static_cast<int>(rng() % 41) - 20;
    const Rational mag = want < 0 ? Rational(-want) : want;
    const Rational p = oracle::pow2(pe);
    REQUIRE(s.compare_magnitude_pow2(pe) == (mag < p ? -1 : (mag > p ? 1 : 0)));
  }
}

TEST_CASE("rounding ties go to even") {
  DyadicSum s;
  s.add(5, -1);  // 2.5
  CHECK(s.round_to_integer() == 2);
  DyadicSum t;
  t.add(-7, -1);  // -3.5
  CHECK(t.round_to_integer() == -4);
  DyadicSum u;
  u.add(3, 0);
  CHECK(u.round_to_integer(1) == 2);  // 1.5 -> 2
}

TEST_CASE("equality ignores representation") {
  DyadicSum a, b;
  a.add(4, 0);
  b.add(1, 2);
  CHECK(a == b);
  a.add(-4, 0);
  CHECK(a.is_zero());
  CHECK(a == DyadicSum{});
}

TEST_CASE("sums merge") {
  DyadicSum a, b;
  a.add(3, -4);
  b.add(5, 7);
  a.add(b);
  CHECK(a.to_double() == 3.0 / 16 + 5.0 * 128);
}

}  // TEST_SUITE
