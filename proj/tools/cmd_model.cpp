// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Tensor, model, calibration and accuracy-sweep commands.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "commands.hpp"
#include "manifest.hpp"
#include "mxsim/calibration.hpp"
#include "mxsim/hash.hpp"
#include "mxsim/parallel.hpp"
#include "mxsim/tensor_io.hpp"

namespace fs = std::filesystem;

namespace mxsim::cli {
namespace {

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Writes to --out (with a manifest sidecar) or to stdout.
void emit_json(const CommonOptions& common, RunManifest& manifest, nlohmann::json j) {
  j["manifest_hash"] = manifest.hash();
  if (common.out.empty()) {
    std::cout << j.dump(2) << '\n';
    return;
  }
  write_json(common.out, j);
  manifest.write_sidecar(common.out);
}

void emit_text(const CommonOptions& common, RunManifest& manifest, const std::string& text) {
  if (common.out.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(common.out);
  if (!out) throw std::runtime_error("cannot write " + common.out);
  out << text;
  out.close();
  manifest.write_sidecar(common.out);
}

EncoderModel load_model(const std::string& dir, RunManifest& manifest) {
  if (dir.empty()) throw UsageError("--model is required");
  if (!fs::is_directory(dir)) throw std::runtime_error("no model bundle at " + dir);
  manifest.add_input(dir);
  return EncoderModel::load(dir);
}

ModelConfig model_config_from_file(const nlohmann::json& config) {
  if (config.contains("model")) return model_config_from_json(config.at("model"));
  if (config.contains("d_model")) return model_config_from_json(config);
  return ModelConfig{};
}

struct CalibrationFile {
  ModelCalibration calibration;
  std::optional<TokenPlan> inputs;
};

CalibrationFile read_calibration(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CalibrationError("cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw CalibrationError(path.string() + ": " + e.what());
  }
  CalibrationFile f{ModelCalibration::from_json(j), std::nullopt};
  if (j.contains("inputs")) f.inputs = token_plan_from_json(j.at("inputs"));
  return f;
}

nlohmann::json write_calibration(const fs::path& path, const ModelCalibration& cal,
                                 const TokenPlan& plan, const std::string& manifest_hash) {
  nlohmann::json j = cal.to_json();
  j["inputs"] = to_json(plan);
  j["manifest_hash"] = manifest_hash;
  write_json(path, j);
  return j;
}

double option_or(const nlohmann::json& config, const char* section, const char* key,
                 std::optional<double> flag, double fallback) {
  if (flag) return *flag;
  if (config.contains(section)) return config.at(section).value(key, fallback);
  return fallback;
}

nlohmann::json digital_report(const EncoderModel& model, const std::vector<Matrix<double>>& inputs) {
  const auto layers = static_cast<std::size_t>(model.config.layers);
  std::vector<double> per_layer(layers, 0.0);
  double end_to_end = 0.0;
  std::size_t agree = 0;
  for (const auto& tokens : inputs) {
    const ForwardResult ref = model_forward(model, tokens, ExecutionMode::reference());
    const ForwardResult dig = model_forward(model, tokens, ExecutionMode::digital());
    for (std::size_t l = 0; l < layers; ++l) {
      per_layer[l] += relative_frobenius_error(dig.layer_outputs[l], ref.layer_outputs[l]);
    }
    end_to_end += relative_frobenius_error(dig.embeddings, ref.embeddings);
    agree += dig.top1 == ref.top1;
  }
  const auto n = static_cast<double>(inputs.size());
  nlohmann::json layers_json = nlohmann::json::array();
  for (std::size_t l = 0; l < layers; ++l) {
    layers_json.push_back({{"layer", l}, {"digital_vs_reference", per_layer[l] / n}});
  }
  return {{"sequences", inputs.size()},
          {"per_layer", layers_json},
          {"end_to_end", {{"digital_vs_reference", end_to_end / n}}},
          {"top1_agreement", {{"digital_vs_reference", static_cast<double>(agree) / n}}}};
}

nlohmann::json reference_report(const EncoderModel& model, const std::vector<Matrix<double>>& inputs) {
  nlohmann::json seqs = nlohmann::json::array();
  for (const auto& tokens : inputs) {
    const ForwardResult r = model_forward(model, tokens, ExecutionMode::reference());
    Fnv1a h;
    h.update({reinterpret_cast<const std::uint8_t*>(r.embeddings.data().data()),
              r.embeddings.data().size() * sizeof(double)});
    seqs.push_back({{"top1", r.top1}, {"logits", r.logits}, {"embedding_hash", h.hex()}});
  }
  return {{"sequences", seqs}};
}

}  // namespace

int cmd_quantize(const CommonOptions& common, const QuantizeOptions& o) {
  RunManifest manifest("quantize", common.args);
  Orientation orientation;
  if (o.orientation == "row") {
    orientation = Orientation::kRowMajor;
  } else if (o.orientation == "col") {
    orientation = Orientation::kColumnMajor;
  } else {
    throw UsageError("--orientation must be 'row' or 'col'");
  }
  const Matrix<double> m = read_f64m(o.input);
  manifest.add_input(o.input);
  QuantStats stats;
  const MxTensor t = MxTensor::quantize(m, orientation, &stats);

  fs::path out = common.out.empty() ? fs::path(o.input).replace_extension(".mxt1") : fs::path(common.out);
  write_mxt1(out, t);
  manifest.set_effective("orientation", o.orientation);
  manifest.add_output(out);
  const fs::path stats_path = out.string() + ".stats.json";
  manifest.add_output(stats_path);

  std::uint64_t zero_blocks = 0;
  std::map<int, std::uint64_t> scales;  // non-zero blocks only
  for (const MxBlock& b : t.blocks()) {
    bool zero = true;
    for (Fp4Code c : b.elements) zero = zero && fp4_decode(c) == 0.0;
    if (zero) {
      ++zero_blocks;
    } else {
      ++scales[b.scale.exponent()];
    }
  }
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [e, n] : scales) hist[std::to_string(e)] = n;
  const nlohmann::json j{
      {"rows", t.rows()},
      {"cols", t.cols()},
      {"orientation", o.orientation},
      {"blocks", t.blocks().size()},
      {"zero_blocks", zero_blocks},
      {"saturated_elements", stats.saturated_elements},
      {"scale_clamps", stats.scale_clamps},
      {"max_exponent", scales.empty() ? nlohmann::json(nullptr) : nlohmann::json(scales.rbegin()->first)},
      {"scale_histogram", hist},
      {"manifest_hash", manifest.hash()}};
  write_json(stats_path, j);
  manifest.write_sidecar(out);
  std::cout << j.dump(2) << '\n';
  return 0;
}

int cmd_build(const CommonOptions& common, const BuildOptions& o) {
  RunManifest manifest("build", common.args);
  if (common.out.empty()) throw UsageError("build needs --out DIR");
  const nlohmann::json config = load_config_file(common.config);
  if (!common.config.empty()) manifest.add_config("model", common.config);
  ModelConfig cfg = model_config_from_file(config);
  if (o.layers) cfg.layers = *o.layers;
  if (o.d_model) {
    cfg.d_model = *o.d_model;
    if (!o.ffn_dim) cfg.ffn_dim = 4 * cfg.d_model;
  }
  if (o.heads) cfg.heads = *o.heads;
  if (o.d_model || o.heads) cfg.d_k = cfg.d_model / std::max(1, cfg.heads);
  if (o.ffn_dim) cfg.ffn_dim = *o.ffn_dim;
  if (o.classes) cfg.classes = *o.classes;
  try {
    cfg.validate();
  } catch (const ModelError& e) {
    throw UsageError(e.what());
  }
  const std::uint64_t seed = common.seed.value_or(0);
  const double spread = option_or(config, "build", "spread", o.spread, 1.0);
  manifest.set_seed(seed);
  manifest.set_effective("model", to_json(cfg));
  manifest.set_effective("spread", spread);

  const EncoderModel model = EncoderModel::random(cfg, seed, spread);
  fs::create_directories(common.out);
  model.save(common.out);
  manifest.add_output(common.out);
  manifest.write_sidecar(common.out);
  std::cout << nlohmann::json{{"model_hash", model.hash()},
                              {"out", common.out},
                              {"manifest_hash", manifest.hash()}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_calibrate(const CommonOptions& common, const CalibrateOptions& o) {
  RunManifest manifest("calibrate", common.args);
  const nlohmann::json config = load_config_file(common.config);
  if (!common.config.empty()) manifest.add_config("experiment", common.config);
  const EncoderModel model = load_model(o.model, manifest);
  const AnalogConfig cfg = resolve_analog(config, o.analog);
  const double percentile = option_or(config, "calibration", "percentile", o.analog.percentile, 100.0);
  if (!(percentile > 0 && percentile <= 100)) throw UsageError("--percentile must be in (0, 100]");
  const std::uint64_t seed = common.seed.value_or(0);
  const TokenPlan plan = resolve_tokens(config, o.tokens, seed, TokenPurpose::kCalibration, model.config);
  if (plan.kind == "file") manifest.add_input(plan.path);
  manifest.set_seed(seed);
  manifest.set_effective("analog", to_json(cfg));
  manifest.set_effective("percentile", percentile);
  manifest.set_effective("tokens", to_json(plan));

  const ModelCalibration cal = calibrate_model(model, materialize(plan, model.config), cfg, percentile);
  const fs::path out = common.out.empty() ? fs::path(o.model) / "calibration.json" : fs::path(common.out);
  manifest.add_output(out);
  write_calibration(out, cal, plan, manifest.hash());
  manifest.write_sidecar(out);

  nlohmann::json targets = nlohmann::json::array();
  for (const auto& l : cal.layers) targets.push_back(l.target_exp);
  std::cout << nlohmann::json{{"calibration", out.string()},
                              {"linears", cal.layers.size()},
                              {"target_exponents", targets},
                              {"manifest_hash", manifest.hash()}}
                   .dump(2)
            << '\n';
  return 0;
}

int cmd_run(const CommonOptions& common, const RunOptions& o) {
  RunManifest manifest("run", common.args);
  const nlohmann::json config = load_config_file(common.config);
  if (!common.config.empty()) manifest.add_config("experiment", common.config);
  const EncoderModel model = load_model(o.model, manifest);
  const std::uint64_t seed = common.seed.value_or(0);
  const TokenPlan plan = resolve_tokens(config, o.tokens, seed, TokenPurpose::kEvaluation, model.config);
  if (plan.kind == "file") manifest.add_input(plan.path);
  manifest.set_seed(seed);
  manifest.set_effective("mode", o.mode);
  manifest.set_effective("tokens", to_json(plan));
  const std::vector<Matrix<double>> inputs = materialize(plan, model.config);

  nlohmann::json report{{"mode", o.mode}, {"model_hash", model.hash()}};
  if (o.mode == "reference") {
    report["result"] = reference_report(model, inputs);
  } else if (o.mode == "digital") {
    report["result"] = digital_report(model, inputs);
  } else {
    const fs::path cal_path =
        o.calibration.empty() ? fs::path(o.model) / "calibration.json" : fs::path(o.calibration);
    if (!fs::exists(cal_path)) {
      throw CalibrationError("analog mode needs a calibration and " + cal_path.string() +
                             " does not exist; run `mxsim calibrate --model " + o.model + "` first");
    }
    manifest.add_input(cal_path);
    CalibrationFile file = read_calibration(cal_path);
    if (!file.calibration.model_hash.empty() && file.calibration.model_hash != model.hash()) {
      throw CalibrationError(cal_path.string() + " was made for a different model; rerun `mxsim calibrate`");
    }
    const AnalogConfig cfg = resolve_analog(config, o.analog, file.calibration.config);
    bool recalibrated = false;
    if (!(cfg == file.calibration.config)) {
      // Targets and ADC full scales depend on the analog settings.
      if (!file.inputs) {
        throw CalibrationError(cal_path.string() +
                               " does not record its inputs; rerun `mxsim calibrate` with these settings");
      }
      file.calibration = calibrate_model(model, materialize(*file.inputs, model.config), cfg,
                                         file.calibration.percentile);
      recalibrated = true;
    }
    manifest.set_effective("analog", to_json(cfg));
    const ModeComparison cmp =
        compare_modes(model, inputs, ExecutionMode::analog(model, file.calibration, cfg));
    report["analog"] = to_json(cfg);
    report["recalibrated"] = recalibrated;
    report["result"] = to_json(cmp);
  }
  if (!common.out.empty()) manifest.add_output(common.out);
  emit_json(common, manifest, report);
  return 0;
}

namespace {

ModeComparison evaluate_point(const EncoderModel& model, const std::vector<Matrix<double>>& cal_inputs,
                              const std::vector<Matrix<double>>& eval_inputs, const AnalogConfig& cfg,
                              double percentile) {
  const ModelCalibration cal = calibrate_model(model, cal_inputs, cfg, percentile);
  return compare_modes(model, eval_inputs, ExecutionMode::analog(model, cal, cfg));
}

double worst_layer(const ModeComparison& c) {
  double w = 0.0;
  for (const auto& l : c.per_layer) w = std::max(w, l.analog_vs_digital);
  return w;
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(10);
  s << v;
  return s.str();
}

}  // namespace

int sweep_accuracy(const CommonOptions& common, const SweepOptions& o) {
  RunManifest manifest("sweep", common.args);
  const nlohmann::json config = load_config_file(common.config);
  if (!common.config.empty()) manifest.add_config("experiment", common.config);
  const EncoderModel model = load_model(o.model, manifest);
  const AnalogConfig base = resolve_analog(config, o.analog);
  const double percentile = option_or(config, "calibration", "percentile", o.analog.percentile, 100.0);
  const std::uint64_t seed = common.seed.value_or(0);
  const TokenPlan cal_plan = resolve_tokens(config, o.tokens, seed, TokenPurpose::kCalibration, model.config);
  const TokenPlan eval_plan = resolve_tokens(config, o.tokens, seed, TokenPurpose::kEvaluation, model.config);
  const auto cal_inputs = materialize(cal_plan, model.config);
  const auto eval_inputs = materialize(eval_plan, model.config);
  manifest.set_seed(seed);
  manifest.set_effective("analog", to_json(base));
  manifest.set_effective("kind", o.kind);

  std::vector<int> values = o.values;
  if (values.empty()) {
    if (o.kind == "adc") values = {8, 9, 10, 11, 12};
    else values = {1, 2, 3, 4, 5, 6};
  }
  manifest.set_effective("values", values);

  struct Variant {
    std::string label;
    AnalogConfig cfg;
  };
  std::vector<std::vector<Variant>> grid;  // one row per value
  for (int v : values) {
    std::vector<Variant> row;
    AnalogConfig c = base;
    if (o.kind == "adc") {
      c.adc_bits = v;
      row.push_back({"", c});
    } else if (o.kind == "cm") {
      c.cm_bits = v;
      row.push_back({"", c});
    } else {
      c.cm_bits = v;
      const std::pair<const char*, std::pair<TargetStrategy, bool>> kinds[] = {
          {"RowHist", {TargetStrategy::kRowHist, false}},
          {"RowHist-2Pass", {TargetStrategy::kRowHist, true}},
          {"Row0", {TargetStrategy::kRow0, false}},
          {"RowOptimal", {TargetStrategy::kRowOptimal, false}}};
      for (const auto& [label, k] : kinds) {
        AnalogConfig s = c;
        s.strategy = k.first;
        s.two_pass = k.second;
        row.push_back({label, s});
      }
    }
    for (const auto& var : row) {
      try {
        var.cfg.validate();
      } catch (const std::exception& e) {
        throw UsageError(e.what());
      }
    }
    grid.push_back(std::move(row));
  }

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t r = 0; r < grid.size(); ++r) {
    for (std::size_t c = 0; c < grid[r].size(); ++c) jobs.emplace_back(r, c);
  }
  std::vector<ModeComparison> results(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) {
    const auto [r, c] = jobs[i];
    results[i] = evaluate_point(model, cal_inputs, eval_inputs, grid[r][c].cfg, percentile);
  });

  std::ostringstream csv;
  if (o.kind == "strategy") {
    csv << "cm_bits,RowHist,RowHist-2Pass,Row0,RowOptimal\n";
    for (std::size_t r = 0; r < grid.size(); ++r) {
      csv << values[r];
      for (std::size_t c = 0; c < grid[r].size(); ++c) {
        csv << ',' << fmt(results[r * grid[r].size() + c].end_to_end_analog_vs_digital);
      }
      csv << '\n';
    }
  } else {
    csv << (o.kind == "adc" ? "adc_bits" : "cm_bits")
        << ",end_to_end_error,worst_layer_error,top1_agreement,block_evaluations,overflow_blocks,"
           "underflow_blocks,adc_saturations\n";
    for (std::size_t r = 0; r < grid.size(); ++r) {
      const ModeComparison& m = results[r];
      csv << values[r] << ',' << fmt(m.end_to_end_analog_vs_digital) << ',' << fmt(worst_layer(m))
          << ',' << fmt(m.top1_analog_vs_digital) << ',' << m.diag.block_evaluations << ','
          << m.diag.overflow_blocks << ',' << m.diag.underflow_blocks << ','
          << m.diag.adc_saturations << '\n';
    }
  }
  if (!common.out.empty()) manifest.add_output(common.out);
  emit_text(common, manifest, csv.str());
  return 0;
}

}  // namespace mxsim::cli
