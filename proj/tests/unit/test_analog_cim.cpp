// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mxsim/analog_cim.hpp"
#include "mxsim/digital_linear.hpp"
#include "mxsim/parallel.hpp"
#include "support/oracles.hpp"
#include "support/random_layers.hpp"

using namespace mxsim;

namespace {

ActivationCodes random_activation(std::mt19937_64& rng) {
  static constexpr int kCodes[] = {0, 1, 2, 3, 4, 6, 8, 12};
  ActivationCodes x{};
  for (auto& v : x) v = static_cast<std::int8_t>(kCodes[rng() % 8] * ((rng() & 1) ? -1 : 1));
  return x;
}

WeightCodes random_weight(std::mt19937_64& rng) {
  static constexpr int kCodes[] = {0, 1, 2, 3, 4, 6, 8, 12};
  WeightCodes w{};
  for (auto& v : w) v = static_cast<std::uint8_t>(12 + kCodes[rng() % 8] * ((rng() & 1) ? -1 : 1));
  return w;
}

// A layer calibrated on its own inputs: E_N is the largest block scale.
AnalogLayerModel self_calibrated(const testing::RandomLinear& l, int k = kUnboundedBudget) {
  const auto [hi, lo] = testing::scale_range(l.x, l.w);
  return AnalogLayerModel(l.w, hi == INT_MIN ? 0 : hi, 1.0, k);
}

}  // namespace

TEST_SUITE("analog_cim") {

TEST_CASE("block_dot_int5 examples and signed-dot oracle") {
  ActivationCodes x{};
  WeightCodes w{};
  w.fill(12);
  x[0] = 1;
  x[1] = 2;
  w[0] = 12;
  w[1] = 14;
  BlockDot d = block_dot_int5(x, w);
  CHECK(d.raw == 40);
  CHECK(d.bias_term == 36);
  CHECK(d.unbiased() == 4);

  ActivationCodes zero{};
  d = block_dot_int5(zero, w);
  CHECK(d.raw == 0);
  CHECK(d.bias_term == 0);

  std::mt19937_64 rng(1);
  for (int i = 0; i < 5000; ++i) {
    const auto xr = random_activation(rng);
    const auto wr = random_weight(rng);
    REQUIRE(block_dot_int5(xr, wr).unbiased() == oracle::signed_dot(xr, wr));
  }
}

TEST_CASE("bit-plane recombination reconstructs the dot product") {
  ActivationCodes x{};
  x.fill(-1);
  BitPlanes p = bitplane_expand(x);
  for (auto plane : p.planes) CHECK(plane == 0xFFFFFFFFu);
  WeightCodes w{};
  for (int i = 0; i < 32; ++i) w[i] = static_cast<std::uint8_t>(i % 25);
  std::int64_t sum_w = 0;
  for (auto v : w) sum_w += v;
  CHECK(bitplane_recombine(p, w) == -sum_w);

  ActivationCodes y{};
  y[0] = 12;
  p = bitplane_expand(y);
  CHECK(p.planes[0] == 0);
  CHECK(p.planes[1] == 0);
  CHECK(p.planes[2] == 1);
  CHECK(p.planes[3] == 1);
  CHECK(p.planes[4] == 0);
  CHECK(bitplane_recombine(p, w) == 12 * w[0]);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 1000; ++i) {
    const auto xr = random_activation(rng);
    const auto wr = random_weight(rng);
    REQUIRE(bitplane_recombine(bitplane_expand(xr), wr) == block_dot_int5(xr, wr).raw);
  }
}

TEST_CASE("align_blocks window semantics") {
  std::vector<BlockPartial> one = {{100, 5}};
  AlignResult r = align_blocks(one, 5, 3);
  CHECK(r.sum.to_double() == 100.0);
  CHECK(r.tags[0] == BlockTag::kInWindow);

  one[0].scale_exp = 5 - (3 + 2);
  r = align_blocks(one, 5, 3);
  CHECK(r.sum.is_zero());
  CHECK(r.tags[0] == BlockTag::kUnderflow);
  CHECK(r.underflows == 1);

  std::vector<BlockPartial> two = {{64, -1}, {8, -3}};
  r = align_blocks(two, 0, 3);
  CHECK(r.sum.to_double() == 33.0);

  std::vector<BlockPartial> over = {{-7, 2}, {0, 3}};
  r = align_blocks(over, 0, 3);
  CHECK(r.overflows == 2);
  CHECK(r.sum.to_double() == -static_cast<double>(kBlockDotMax));

  std::vector<BlockPartial> empty = {{0, 40, true}};
  r = align_blocks(empty, 0, 3);
  CHECK(r.overflows == 0);
  CHECK(r.tags[0] == BlockTag::kInWindow);
}

TEST_CASE("two-pass recovers the second window and equals one pass at 2cm") {
  std::vector<BlockPartial> p = {{100, 0}, {77, -4}};
  AlignResult r = two_pass_column(p, 0, 3);
  CHECK(r.underflows == 0);
  CHECK(r.tags[1] == BlockTag::kInWindow);
  CHECK(r.sum.to_double() == 100.0 + 77.0 / 16.0);

  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5000; ++trial) {
    const int cm = 1 + static_cast<int>(rng() % 6);
    std::vector<BlockPartial> blocks(1 + rng() % 12);
    for (auto& b : blocks) {
      b.unbiased = static_cast<std::int64_t>(rng() % 9217) - 4608;
      b.scale_exp = -static_cast<int>(rng() % 20);
    }
    const AlignResult two = two_pass_column(blocks, 0, cm);
    const AlignResult wide = align_blocks(blocks, 0, 2 * cm);
    REQUIRE(two.sum == wide.sum);
    REQUIRE(two.tags == wide.tags);
    REQUIRE(two.underflows == wide.underflows);
  }
}

TEST_CASE("underflow fraction is non-increasing in cm") {
  std::mt19937_64 rng(5);
  for (int layer = 0; layer < 20; ++layer) {
    const auto l = testing::random_linear(rng, 4, 128, 16, 4);
    const AnalogLayerModel m = self_calibrated(l);
    std::uint64_t prev = UINT64_MAX;
    for (int cm = 1; cm <= 5; ++cm) {
      AnalogConfig cfg;
      cfg.cm_bits = cm;
      cfg.adc_bits = std::nullopt;
      cfg.two_pass = false;
      const auto r = analog_linear(l.x, m, cfg);
      REQUIRE(r.diag.underflow_blocks <= prev);
      prev = r.diag.underflow_blocks;
    }
  }
}

TEST_CASE("adc quantization") {
  CHECK(adc_quantize(0.0, 10, 1024.0).code == 0);
  const AdcReading full = adc_quantize(1024.0, 10, 1024.0);
  CHECK(full.code == 511);
  CHECK(full.saturated);
  CHECK(adc_quantize(-1024.0, 10, 1024.0).code == -512);
  CHECK_FALSE(adc_quantize(-1024.0, 10, 1024.0).saturated);
  CHECK(adc_quantize(3.4, 10, 1024.0).code == 2);
  CHECK(adc_quantize(3.0, 10, 1024.0).code == 2);  // 1.5 ties to even
  CHECK(adc_quantize(5.0, 10, 1024.0).code == 2);  // 2.5 ties to even

  std::mt19937_64 rng(6);
  for (int i = 0; i < 20000; ++i) {
    DyadicSum s;
    s.add(static_cast<std::int64_t>(rng() % 200001) - 100000, -static_cast<int>(rng() % 6));
    const int bits = 4 + static_cast<int>(rng() % 9);
    const double fs = std::ldexp(1.0, static_cast<int>(rng() % 18));
    const AdcReading a = adc_quantize(s, bits, fs);
    const AdcReading b = adc_quantize(s.to_double(), bits, fs);
    REQUIRE(a.code == b.code);
    REQUIRE(a.saturated == b.saturated);
  }
}

TEST_CASE("calibrated fullscale never saturates") {
  for (int bits : {4, 6, 8, 10, 12}) {
    for (double m : {0.1, 1.0, 4096.0, 4095.9, 511.75, 1000.0, 3.0}) {
      const double fs = adc_fullscale_for(m, bits);
      CHECK(fs > m);
      CHECK_FALSE(adc_quantize(m, bits, fs).saturated);
      CHECK_FALSE(adc_quantize(-m, bits, fs).saturated);
      int e = 0;
      CHECK(std::frexp(fs, &e) == 0.5);
    }
  }
  CHECK(adc_fullscale_for(0.0, 10) == 1.0);
  CHECK(adc_fullscale_for(4096.0, 0) == 8192.0);
}

TEST_CASE("unbounded budget with ideal ADC equals the digital MXFP4 layer") {
  std::mt19937_64 rng(2026);
  const AnalogConfig cfg = AnalogConfig::unbounded();
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t rows = 1 + rng() % 4;
    const std::size_t in = 32 * (1 + rng() % 4);
    const std::size_t out = 1 + rng() % 12;
    const auto l = testing::random_linear(rng, rows, in, out, 6);
    const AnalogLayerModel layer = self_calibrated(l);
    const MxTensor analog = analog_linear_forward(l.x, layer, cfg);
    const MxTensor digital = MxTensor::quantize(digital_linear(l.x, l.w), Orientation::kRowMajor);
    REQUIRE(analog == digital);
    const auto raw = analog_linear(l.x, layer, cfg);
    REQUIRE(raw.values == digital_linear(l.x, l.w));
    REQUIRE(raw.diag.overflow_blocks == 0);
    REQUIRE(raw.diag.underflow_blocks == 0);
  }
}

TEST_CASE("all-zero input yields zero output and no tags") {
  MxTensor x(3, 64, Orientation::kRowMajor);
  std::mt19937_64 rng(8);
  const auto l = testing::random_linear(rng, 3, 64, 5, 2);
  const AnalogLayerModel layer(l.w, 0, 16.0, 7);
  AnalogConfig cfg;
  const auto r = analog_linear(x, layer, cfg);
  for (double v : r.values.data()) CHECK(v == 0.0);
  CHECK(r.diag.underflow_blocks == 0);
  CHECK(r.diag.overflow_blocks == 0);
  CHECK(r.diag.adc_saturations == 0);
}

TEST_CASE("two-pass at cm=3 recovers gaps spanning six binades") {
  // Weight block exponents 0 and -6 across two block rows; activations at 0.
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix<double> xm(2, 64), wm(64, 4);
    std::normal_distribution<double> n(0.0, 1.0);
    // Each block holds a 5.0 pivot, pinning its scale exponent at 0.
    auto bounded = [&] { return std::clamp(n(rng), -3.9, 3.9); };
    for (std::size_t r = 0; r < 2; ++r)
      for (std::size_t c = 0; c < 64; ++c) xm(r, c) = c % 32 == 0 ? 5.0 : bounded();
    for (std::size_t r = 0; r < 64; ++r)
      for (std::size_t c = 0; c < 4; ++c)
        wm(r, c) = std::ldexp(r % 32 == 0 ? 5.0 : bounded(), r < 32 ? 0 : -6);
    testing::RandomLinear l{MxTensor::quantize(xm, Orientation::kRowMajor),
                            MxTensor::quantize(wm, Orientation::kColumnMajor)};
    const auto [hi, lo] = testing::scale_range(l.x, l.w);
    REQUIRE(hi - lo == 6);
    const AnalogLayerModel layer(l.w, hi, 1.0, 7);
    AnalogConfig cfg;
    cfg.cm_bits = 3;
    cfg.two_pass = true;
    cfg.adc_bits = std::nullopt;
    const auto r = analog_linear(l.x, layer, cfg);
    REQUIRE(r.diag.underflow_blocks == 0);
    REQUIRE(r.values == digital_linear(l.x, l.w));
  }
}

TEST_CASE("row-hist target from the calibration inputs never overflows") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    const auto l = testing::random_linear(rng, 4, 96, 8, 5);
    const AnalogLayerModel layer = self_calibrated(l, 7);
    AnalogConfig cfg;
    const auto r = analog_linear(l.x, layer, cfg);
    REQUIRE(r.diag.overflow_blocks == 0);
  }
}

TEST_CASE("ADC saturation is zero with a calibrated fullscale") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const auto l = testing::random_linear(rng, 4, 96, 8, 3);
    const auto [hi, lo] = testing::scale_range(l.x, l.w);
    AnalogConfig cfg;
    cfg.adc_bits = std::nullopt;
    const auto ideal = analog_linear(l.x, AnalogLayerModel(l.w, hi, 1.0, 7), cfg);
    double max_abs = 0.0;
    for (double v : ideal.pre_adc.data()) max_abs = std::max(max_abs, std::fabs(v));
    cfg.adc_bits = 10;
    const AnalogLayerModel layer(l.w, hi, adc_fullscale_for(max_abs, 10), 7);
    REQUIRE(analog_linear(l.x, layer, cfg).diag.adc_saturations == 0);
  }
}

TEST_CASE("decoded value follows code, LSB and target exponent") {
  std::mt19937_64 rng(14);
  const auto l = testing::random_linear(rng, 2, 64, 4, 2);
  const auto [hi, lo] = testing::scale_range(l.x, l.w);
  const AnalogLayerModel layer(l.w, hi, 2048.0, 7);
  AnalogConfig cfg;
  const auto r = analog_linear(l.x, layer, cfg);
  CHECK(r.lsb == 4.0);
  for (std::size_t i = 0; i < r.values.rows(); ++i) {
    for (std::size_t c = 0; c < r.values.cols(); ++c) {
      CHECK(r.values(i, c) ==
            static_cast<double>(r.codes(i, c)) * r.lsb * std::ldexp(1.0, r.target_exps(i, c) - 2));
      CHECK(r.codes(i, c) >= -512);
      CHECK(r.codes(i, c) <= 511);
    }
  }
  const RawInt10Output raw = analog_linear_raw(l.x, layer, cfg);
  CHECK(raw.dequantize() == r.values);
}

TEST_CASE("exponent window clips outlying weight blocks") {
  Matrix<double> wm(96, 1, 1.0);
  for (std::size_t r = 64; r < 96; ++r) wm(r, 0) = std::ldexp(1.0, -12);
  const MxTensor w = MxTensor::quantize(wm, Orientation::kColumnMajor);
  const AnalogLayerModel layer(w, 0, 1.0, 7);
  CHECK(layer.et_clips() == 1);
  CHECK(layer.e_min() == 2);
  CHECK(layer.weight_exponent(2, 0) == -14);
  CHECK(layer.effective_weight_exponent(2, 0) == -9);
  CHECK(layer.effective_weight_exponent(0, 0) == -2);
  const AnalogLayerModel wide(w, 0, 1.0, 12);
  CHECK(wide.et_clips() == 0);
}

TEST_CASE("online strategies pick row-0 and upper-median targets") {
  std::vector<BlockPartial> p = {{1, 9}, {1, 3}, {1, 5}};
  CHECK(row0_target(p) == 9);
  CHECK(row_optimal_target(p) == 5);
  p.push_back({1, 7});
  CHECK(row_optimal_target(p) == 7);
  p[0].empty = true;
  CHECK(row0_target(p) == 3);
  CHECK(parse_strategy("row-hist") == TargetStrategy::kRowHist);
  CHECK(parse_strategy("Row0") == TargetStrategy::kRow0);
  CHECK(parse_strategy("RowOptimal") == TargetStrategy::kRowOptimal);
  CHECK_THROWS_AS(parse_strategy("nope"), ConfigError);
}

TEST_CASE("configuration validation and dimension checks") {
  AnalogConfig cfg;
  cfg.cm_bits = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.cm_bits = 12;
  CHECK_NOTHROW(cfg.validate());
  CHECK_FALSE(cfg.physically_plausible());
  cfg.adc_bits = 3;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK(AnalogConfig{}.effective_window() == 6);

  std::mt19937_64 rng(15);
  const auto l = testing::random_linear(rng, 2, 64, 4, 2);
  const AnalogLayerModel layer(l.w, 0, 1.0);
  const MxTensor wrong = MxTensor::quantize(Matrix<double>(2, 32, 1.0), Orientation::kRowMajor);
  CHECK_THROWS_AS(analog_linear(wrong, layer, AnalogConfig{}), ConfigError);
  CHECK_THROWS_AS(AnalogLayerModel(l.x, 0, 1.0), ConfigError);
}

TEST_CASE("layer sidecar round-trips") {
  std::mt19937_64 rng(16);
  const auto l = testing::random_linear(rng, 2, 64, 4, 2);
  const AnalogLayerModel layer(l.w, -3, 512.0, 7);
  AnalogConfig cfg;
  cfg.cm_bits = 4;
  cfg.strategy = TargetStrategy::kRowOptimal;
  const auto stem = (std::filesystem::temp_directory_path() / "mxsim_layer").string();
  layer.save(stem, cfg);
  const auto [back, back_cfg] = AnalogLayerModel::load(stem);
  CHECK(back_cfg == cfg);
  CHECK(back.target_exp() == -3);
  CHECK(back.adc_fullscale() == 512.0);
  CHECK(back.weights() == l.w);
  const auto j = layer.sidecar(cfg);
  for (const char* key : {"E_N", "E_min", "adc_fullscale", "cm_bits", "k"}) CHECK(j.contains(key));
  std::filesystem::remove(stem + ".json");
  std::filesystem::remove(stem + ".mxt1");
}

TEST_CASE("results do not depend on the thread count") {
  std::mt19937_64 rng(17);
  const auto l = testing::random_linear(rng, 16, 128, 24, 4);
  const AnalogLayerModel layer = self_calibrated(l, 7);
  AnalogConfig cfg;
  set_num_threads(1);
  const auto a = analog_linear(l.x, layer, cfg);
  set_num_threads(4);
  const auto b = analog_linear(l.x, layer, cfg);
  set_num_threads(1);
  CHECK(a.codes == b.codes);
  CHECK(a.values == b.values);
  CHECK(a.diag == b.diag);
}

}  // TEST_SUITE
