// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cctype>
#include <fstream>

#include "commands.hpp"
#include "mxsim/hash.hpp"
#include "mxsim/tensor_io.hpp"

namespace mxsim::cli {

nlohmann::json load_config_file(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    if (!j.is_object()) throw UsageError(path + ": config must be a JSON object");
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  }
}

std::optional<int> parse_adc(const std::string& text) {
  std::string lower = text;
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "ideal") return std::nullopt;
  try {
    std::size_t used = 0;
    const int bits = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return bits;
  } catch (const std::exception&) {
    throw UsageError("--adc expects an integer or 'ideal', got '" + text + "'");
  }
}

AnalogConfig resolve_analog(const nlohmann::json& config, const AnalogFlags& flags,
                            const AnalogConfig& base) {
  AnalogConfig cfg = base;
  try {
    if (config.contains("analog")) {
      // Keys missing from the file keep the base values.
      nlohmann::json merged = mxsim::to_json(base);
      merged.merge_patch(config.at("analog"));
      cfg = analog_config_from_json(merged);
    }
  } catch (const std::exception& e) {
    throw UsageError(std::string("analog config: ") + e.what());
  }
  bool unbounded = false;
  if (flags.cm) {
    if (*flags.cm < 0) throw UsageError("--cm must be >= 0");
    // A budget at or past the accumulator range asks for exact alignment:
    // every block in one window, no weight clipping.
    unbounded = *flags.cm >= kUnboundedBudget;
    cfg.cm_bits = std::min(*flags.cm, kUnboundedBudget);
  }
  if (flags.adc) cfg.adc_bits = parse_adc(*flags.adc);
  if (flags.strategy) {
    std::string name = *flags.strategy;
    std::string lower = name;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    const std::string suffix = "-2pass";
    if (lower.size() > suffix.size() && lower.ends_with(suffix)) {
      name.resize(name.size() - suffix.size());
      cfg.two_pass = true;
    }
    try {
      cfg.strategy = parse_strategy(name);
    } catch (const std::exception& e) {
      throw UsageError(e.what());
    }
  }
  if (flags.two_pass) cfg.two_pass = *flags.two_pass;
  if (unbounded) {
    const AnalogConfig exact = AnalogConfig::unbounded();
    cfg.k_window = exact.k_window;
    cfg.two_pass = exact.two_pass;
    cfg.target_offset = exact.target_offset;
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  return cfg;
}

nlohmann::json to_json(const TokenPlan& p) {
  nlohmann::json j{{"kind", p.kind},
                   {"seed", p.seed},
                   {"sequences", p.sequences},
                   {"seq_len", p.seq_len},
                   {"purpose", p.purpose == TokenPurpose::kCalibration ? "calibration" : "evaluation"}};
  if (p.kind == "file") j["path"] = p.path;
  return j;
}

TokenPlan token_plan_from_json(const nlohmann::json& j) {
  TokenPlan p;
  p.kind = j.value("kind", p.kind);
  p.path = j.value("path", p.path);
  p.seed = j.value("seed", p.seed);
  p.sequences = j.value("sequences", p.sequences);
  p.seq_len = j.value("seq_len", p.seq_len);
  p.purpose = j.value("purpose", std::string("evaluation")) == "calibration"
                  ? TokenPurpose::kCalibration
                  : TokenPurpose::kEvaluation;
  return p;
}

TokenPlan resolve_tokens(const nlohmann::json& config, const TokenFlags& flags,
                         std::uint64_t seed, TokenPurpose purpose, const ModelConfig& model) {
  TokenPlan p;
  p.purpose = purpose;
  p.seed = seed;
  // Static targets need the calibration set to reach the activation tail;
  // four sequences leave LayerNorm outputs one binade short on held-out data.
  p.sequences = purpose == TokenPurpose::kCalibration ? 16 : 4;
  const char* section = purpose == TokenPurpose::kCalibration ? "calibration" : "evaluation";
  if (config.contains(section)) {
    const auto& s = config.at(section);
    p.sequences = s.value("sequences", p.sequences);
    p.seq_len = s.value("seq_len", p.seq_len);
  }
  if (flags.sequences) p.sequences = *flags.sequences;
  if (flags.seq_len) p.seq_len = *flags.seq_len;
  if (!flags.input.empty()) {
    p.kind = "file";
    p.path = flags.input;
  } else if (model.tokens.kind == "file") {
    p.kind = "file";
    p.path = model.tokens.path;
  }
  if (p.sequences < 1) throw UsageError("--sequences must be >= 1");
  if (p.seq_len < 1 || p.seq_len > model.max_seq) {
    throw UsageError("--seq-len must be in [1, " + std::to_string(model.max_seq) + "]");
  }
  return p;
}

std::vector<Matrix<double>> materialize(const TokenPlan& plan, const ModelConfig& model) {
  if (plan.kind == "file") {
    return {read_f64m(plan.path)};
  }
  std::vector<Matrix<double>> out;
  for (int i = 0; i < plan.sequences; ++i) {
    Fnv1a h;
    h.update(plan.purpose == TokenPurpose::kCalibration ? "calibration" : "evaluation");
    h.update(std::to_string(plan.seed) + "/" + std::to_string(i));
    out.push_back(synthetic_tokens(static_cast<std::size_t>(plan.seq_len),
                                   static_cast<std::size_t>(model.d_model), h.value(),
                                   model.tokens.components, model.tokens.drift));
  }
  return out;
}

}  // namespace mxsim::cli
