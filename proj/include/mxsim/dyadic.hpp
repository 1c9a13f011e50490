// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace mxsim {

// Exact running sum of terms m * 2^e. Stored as a 128-bit integer times a
// power of two, normalized so the integer is odd (or zero). Throws
// std::overflow_error if the exponent span of the terms exceeds ~120 bits.
class DyadicSum {
 public:
  DyadicSum() = default;

  void add(std::int64_t mantissa, int exponent);
  void add(const DyadicSum& other);

  [[nodiscard]] bool is_zero() const { return num_ == 0; }
  [[nodiscard]] int sign() const { return num_ > 0 ? 1 : (num_ < 0 ? -1 : 0); }

  // value * 2^shift, correctly rounded to double (nearest-even).
  [[nodiscard]] double to_double(int shift = 0) const;
  // round(value * 2^-shift) with ties to even; saturates at int64 range.
  [[nodiscard]] std::int64_t round_to_integer(int shift = 0) const;
  // Exact comparison of |value| against 2^e.
  [[nodiscard]] int compare_magnitude_pow2(int e) const;

  [[nodiscard]] std::string to_string() const;  // "num*2^exp"

  friend bool operator==(const DyadicSum& a, const DyadicSum& b) {
    return a.num_ == b.num_ && (a.num_ == 0 || a.exp_ == b.exp_);
  }

 private:
  void normalize();

  __int128 num_ = 0;
  int exp_ = 0;
};

}  // namespace mxsim
