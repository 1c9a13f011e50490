// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/dyadic.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mxsim {
namespace {

using u128 = unsigned __int128;

constexpr int kHeadroomBits = 124;

int bit_length(u128 v) {
  const auto hi = static_cast<std::uint64_t>(v >> 64);
  if (hi != 0) return 64 + std::bit_width(hi);
  return std::bit_width(static_cast<std::uint64_t>(v));
}

u128 magnitude(__int128 v) { return v < 0 ? -static_cast<u128>(v) : static_cast<u128>(v); }

__int128 shifted_left(__int128 v, int by) {
  if (by == 0 || v == 0) return v;
  if (bit_length(magnitude(v)) + by > kHeadroomBits) {
    throw std::overflow_error("DyadicSum: exponent span exceeds 128-bit accumulator");
  }
  return v * (static_cast<__int128>(1) << by);
}

// Round magnitude >> shift to nearest, ties to even.
u128 round_shift(u128 mag, int shift) {
  if (shift <= 0) return mag;
  if (shift >= 128) return 0;
  const u128 kept = mag >> shift;
  const u128 rem = mag & ((static_cast<u128>(1) << shift) - 1);
  const u128 half = static_cast<u128>(1) << (shift - 1);
  if (rem > half || (rem == half && (kept & 1) != 0)) return kept + 1;
  return kept;
}

}  // namespace

void DyadicSum::normalize() {
  if (num_ == 0) {
    exp_ = 0;
    return;
  }
  const u128 mag = magnitude(num_);
  const auto low = static_cast<std::uint64_t>(mag);
  const int zeros = low != 0 ? std::countr_zero(low)
                             : 64 + std::countr_zero(static_cast<std::uint64_t>(mag >> 64));
  num_ >>= zeros;  // exact: the shifted-out bits are zero
  exp_ += zeros;
}

void DyadicSum::add(std::int64_t mantissa, int exponent) {
  if (mantissa == 0) return;
  __int128 m = mantissa;
  if (num_ == 0) {
    num_ = m;
    exp_ = exponent;
  } else if (exponent < exp_) {
    num_ = shifted_left(num_, exp_ - exponent) + m;
    exp_ = exponent;
  } else {
    num_ += shifted_left(m, exponent - exp_);
  }
  normalize();
}

void DyadicSum::add(const DyadicSum& other) {
  if (other.num_ == 0) return;
  if (num_ == 0) {
    *this = other;
    return;
  }
  const int e = std::min(exp_, other.exp_);
  num_ = shifted_left(num_, exp_ - e) + shifted_left(other.num_, other.exp_ - e);
  exp_ = e;
  normalize();
}

double DyadicSum::to_double(int shift) const {
  if (num_ == 0) return 0.0;
  const u128 mag = magnitude(num_);
  const int len = bit_length(mag);
  int e = exp_ + shift;
  u128 top = mag;
  if (len > 53) {
    top = round_shift(mag, len - 53);
    e += len - 53;
  }
  const double v = std::ldexp(static_cast<double>(static_cast<std::uint64_t>(top)), e);
  return num_ < 0 ? -v : v;
}

std::int64_t DyadicSum::round_to_integer(int shift) const {
  if (num_ == 0) return 0;
  const u128 mag = magnitude(num_);
  const int net = exp_ - shift;  // value * 2^-shift = num * 2^net
  u128 r;
  if (net >= 0) {
    if (bit_length(mag) + net > 63) r = static_cast<u128>(std::numeric_limits<std::int64_t>::max());
    else r = mag << net;
  } else {
    r = round_shift(mag, -net);
  }
  const auto cap = static_cast<u128>(std::numeric_limits<std::int64_t>::max());
  if (r > cap) r = cap;
  const auto v = static_cast<std::int64_t>(r);
  return num_ < 0 ? -v : v;
}

int DyadicSum::compare_magnitude_pow2(int e) const {
  if (num_ == 0) return -1;
  const u128 mag = magnitude(num_);
  // |v| = mag * 2^exp_ with mag odd; compare against 2^e.
  const int top = bit_length(mag) - 1 + exp_;  // floor(log2 |v|)
  if (top != e) return top < e ? -1 : 1;
  return mag == 1 ? 0 : 1;
}

std::string DyadicSum::to_string() const {
  const u128 mag = magnitude(num_);
  std::string digits;
  u128 v = mag;
  do {
    digits.insert(digits.begin(), static_cast<char>('0' + static_cast<int>(v % 10)));
    v /= 10;
  } while (v != 0);
  return (num_ < 0 ? "-" : "") + digits + "*2^" + std::to_string(exp_);
}

}  // namespace mxsim
