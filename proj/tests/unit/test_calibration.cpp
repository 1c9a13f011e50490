// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mxsim/calibration.hpp"
#include "support/random_layers.hpp"

using namespace mxsim;

TEST_SUITE("calibration") {

TEST_CASE("constant inputs give one bin per block position") {
  const MxTensor x = MxTensor::quantize(Matrix<double>(4, 96, 1.5), Orientation::kRowMajor);
  const MxTensor w = MxTensor::quantize(Matrix<double>(96, 8, -0.25), Orientation::kColumnMajor);
  ExponentHistogram h;
  h.record_linear(x, w);
  REQUIRE(h.per_position.size() == 3);
  for (const auto& p : h.per_position) CHECK(p.size() == 1);
  CHECK(h.bins.size() == 1);
  CHECK(h.total() == 4u * 3u * 8u);
}

TEST_CASE("doubling the inputs shifts every bin by one") {
  std::mt19937_64 rng(1);
  const Matrix<double> xm = testing::drifting_matrix(6, 128, rng, 3, false);
  const MxTensor w = MxTensor::quantize(testing::drifting_matrix(128, 10, rng, 3, true),
                                        Orientation::kColumnMajor);
  ExponentHistogram a, b;
  a.record_linear(MxTensor::quantize(xm, Orientation::kRowMajor), w);
  b.record_linear(MxTensor::quantize(map_matrix(xm, [](double v) { return 2 * v; }),
                                     Orientation::kRowMajor),
                  w);
  REQUIRE(a.bins.size() == b.bins.size());
  for (const auto& [e, n] : a.bins) CHECK(b.bins.at(e + 1) == n);
}

TEST_CASE("histogram totals count every block evaluation") {
  std::mt19937_64 rng(2);
  ExponentHistogram h;
  std::uint64_t expected = 0;
  // Two layers of different shapes over three samples.
  for (int sample = 0; sample < 3; ++sample) {
    for (auto [in, out] : {std::pair{64, 5}, std::pair{96, 3}}) {
      const auto l = testing::random_linear(rng, 4, in, out, 2);
      h.record_linear(l.x, l.w);
      expected += 4u * static_cast<std::uint64_t>(in / 32) * static_cast<std::uint64_t>(out);
    }
  }
  // Zero rows still count, as empty evaluations.
  Matrix<double> zx(2, 64);
  const auto l = testing::random_linear(rng, 2, 64, 5, 2);
  h.record_linear(MxTensor::quantize(zx, Orientation::kRowMajor), l.w);
  expected += 2u * 2u * 5u;
  CHECK(h.total() == expected);
  CHECK(h.empty_evaluations == 20);
}

TEST_CASE("target selection rules") {
  ExponentHistogram h;
  h.record(0, 5, 10);
  h.record(0, 7, 2);
  AnalogConfig cfg;
  const LayerCalibration c = select_target(h, TargetStrategy::kRowHist, cfg);
  CHECK(c.target_exp == 7);
  REQUIRE(c.second_target.has_value());
  CHECK(*c.second_target == 7 - cfg.cm_bits);
  CHECK(h.percentile_exponent(50.0) == 5);
  CHECK(h.percentile_exponent(90.0) == 7);
  CHECK_THROWS_AS((void)ExponentHistogram{}.max_exponent(), CalibrationError);
}

TEST_CASE("calibration requires input") {
  std::mt19937_64 rng(3);
  const auto l = testing::random_linear(rng, 2, 64, 4, 2);
  CHECK_THROWS_AS(calibrate_layer(0, {}, l.w, AnalogConfig{}), CalibrationError);
}

TEST_CASE("row-hist calibration: no overflow or ADC clipping on its own inputs") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<MxTensor> inputs;
    const auto l = testing::random_linear(rng, 8, 128, 12, 4);
    inputs.push_back(l.x);
    inputs.push_back(MxTensor::quantize(testing::drifting_matrix(8, 128, rng, 4, false),
                                        Orientation::kRowMajor));
    AnalogConfig cfg;
    const LayerCalibration cal = calibrate_layer(0, inputs, l.w, cfg);
    const AnalogLayerModel model = build_layer_model(l.w, cal, cfg);
    for (const MxTensor& x : inputs) {
      const auto d = analog_linear(x, model, cfg).diag;
      REQUIRE(d.overflow_blocks == 0);
      REQUIRE(d.adc_saturations == 0);
    }
    const auto stats = saturation_stats({{inputs, l.w, cal}}, {1, 2, 3, 4, 5, 40}, cfg);
    for (std::size_t i = 0; i < stats.size(); ++i) {
      CHECK(stats[i].overflow_fraction() == 0.0);
      if (i > 0) CHECK(stats[i].underflow_fraction() <= stats[i - 1].underflow_fraction());
    }
    CHECK(stats.back().underflow_fraction() == 0.0);
    CHECK(stats.back().preserved_fraction() == 1.0);
  }
}

TEST_CASE("calibration is deterministic and round-trips through JSON") {
  std::mt19937_64 rng(5);
  const auto l = testing::random_linear(rng, 4, 64, 6, 3);
  AnalogConfig cfg;
  cfg.strategy = TargetStrategy::kRow0;
  const LayerCalibration a = calibrate_layer(3, {l.x}, l.w, cfg);
  const LayerCalibration b = calibrate_layer(3, {l.x}, l.w, cfg);
  CHECK(a.hist == b.hist);
  CHECK(a.target_exp == b.target_exp);
  CHECK(a.adc_fullscale == b.adc_fullscale);

  ModelCalibration m;
  m.model_hash = "abc";
  m.config = cfg;
  m.layers = {a};
  const auto path = std::filesystem::temp_directory_path() / "mxsim_cal.json";
  m.save(path);
  const ModelCalibration back = ModelCalibration::load(path);
  std::filesystem::remove(path);
  CHECK(back.model_hash == "abc");
  CHECK(back.config == cfg);
  REQUIRE(back.layers.size() == 1);
  CHECK(back.layers[0].layer_id == 3);
  CHECK(back.layers[0].target_exp == a.target_exp);
  CHECK(back.layers[0].adc_fullscale == a.adc_fullscale);
  CHECK(back.layers[0].hist == a.hist);
  CHECK(back.layers[0].strategy == TargetStrategy::kRow0);
}

TEST_CASE("histogram merge is order independent") {
  std::mt19937_64 rng(6);
  const auto l1 = testing::random_linear(rng, 3, 64, 4, 3);
  const auto l2 = testing::random_linear(rng, 3, 96, 4, 3);
  ExponentHistogram a, b, x, y;
  a.record_linear(l1.x, l1.w);
  b.record_linear(l2.x, l2.w);
  x = a;
  x.merge(b);
  y = b;
  y.merge(a);
  CHECK(x == y);
}

}  // TEST_SUITE
