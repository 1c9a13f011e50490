// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
#include "mxsim/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include "mxsim/digital_linear.hpp"
#include "mxsim/hash.hpp"
#include "mxsim/parallel.hpp"
#include "mxsim/tensor_io.hpp"

namespace mxsim {
namespace {

constexpr std::array<const char*, kLinearSlots> kSlotNames = {"wq", "wk", "wv", "wo", "ffn1",
                                                              "ffn2"};

Matrix<double> matmul(const Matrix<double>& a, const Matrix<double>& b) {
  Matrix<double> out(a.rows(), b.cols());
  parallel_for(a.rows(), [&](std::size_t i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  });
  return out;
}

MxTensor quantize_rows(const Matrix<double>& m) {
  return MxTensor::quantize(m, Orientation::kRowMajor);
}

// softmax(q k^T / sqrt(d_k)) v per head, in double.
Matrix<double> attention_f64(const Matrix<double>& q, const Matrix<double>& k,
                             const Matrix<double>& v, int heads, int d_k) {
  const std::size_t n = q.rows();
  Matrix<double> out(n, q.cols());
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_k));
  parallel_for(static_cast<std::size_t>(heads) * n, [&](std::size_t job) {
    const std::size_t c0 = (job / n) * static_cast<std::size_t>(d_k);
    const std::size_t i = job % n;
    std::vector<double> s(n);
    double m = -INFINITY;
    for (std::size_t j = 0; j < n; ++j) {
      double dot = 0.0;
      for (int c = 0; c < d_k; ++c) dot += q(i, c0 + c) * k(j, c0 + c);
      s[j] = dot * scale;
      m = std::max(m, s[j]);
    }
    double l = 0.0;
    for (double& x : s) l += (x = std::exp(x - m));
    for (int c = 0; c < d_k; ++c) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += s[j] * v(j, c0 + c);
      out(i, c0 + c) = acc / l;
    }
  });
  return out;
}

Matrix<double> add_f64(const Matrix<double>& a, const Matrix<double>& b) {
  Matrix<double> out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Matrix<double> gaussian_matrix(std::size_t rows, std::size_t cols, double sigma,
                               std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, sigma);
  Matrix<double> m(rows, cols);
  for (double& v : m.data()) v = n(rng);
  return m;
}

NormParams random_norm(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 0.1);
  NormParams p;
  for (std::size_t i = 0; i < d; ++i) {
    p.gain.push_back(Bf16::from_double(1.0 + n(rng)));
    p.bias.push_back(Bf16::from_double(n(rng)));
  }
  return p;
}

Matrix<double> norm_matrix(const NormParams& a, const NormParams& b) {
  const std::size_t d = a.gain.size();
  Matrix<double> m(4, d);
  for (std::size_t i = 0; i < d; ++i) {
    m(0, i) = a.gain[i].to_double();
    m(1, i) = a.bias[i].to_double();
    m(2, i) = b.gain[i].to_double();
    m(3, i) = b.bias[i].to_double();
  }
  return m;
}

NormParams norm_row(const Matrix<double>& m, std::size_t first) {
  NormParams p;
  for (std::size_t i = 0; i < m.cols(); ++i) {
    p.gain.push_back(Bf16::from_double(m(first, i)));
    p.bias.push_back(Bf16::from_double(m(first + 1, i)));
  }
  return p;
}

std::pair<std::size_t, std::size_t> slot_shape(const ModelConfig& c, LinearSlot s) {
  const auto d = static_cast<std::size_t>(c.d_model);
  const auto f = static_cast<std::size_t>(c.ffn_dim);
  switch (s) {
    case LinearSlot::kFfnUp:
      return {d, f};
    case LinearSlot::kFfnDown:
      return {f, d};
    default:
      return {d, d};
  }
}

void hash_matrix(Fnv1a& h, const Matrix<double>& m) { h.update(encode_f64m(m)); }

// Linear through the mode's back end. Records the operand when tracing.
Matrix<double> run_linear(const MxTensor& x, const EncoderModel& model, int layer, LinearSlot slot,
                          const ExecutionMode& mode, LayerTrace* trace, AnalogDiagnostics* diag) {
  if (trace) trace->inputs[static_cast<std::size_t>(slot)] = x;
  if (mode.kind == ModeKind::kDigital) return digital_linear(x, model.layers[layer][slot].mx);
  AnalogLinearResult r = analog_linear(
      x, mode.plan->linears[static_cast<std::size_t>(linear_id(layer, slot))], mode.plan->config);
  if (diag) diag->merge(r.diag);
  return std::move(r.values);
}

Matrix<double> reference_layer(const Matrix<double>& x, const EncoderModel& model, int layer) {
  const EncoderLayerWeights& w = model.layers[layer];
  const ModelConfig& c = model.config;
  const Matrix<double> h = layernorm_f64(x, w.ln1);
  const Matrix<double> att =
      attention_f64(matmul(h, w[LinearSlot::kQuery].real), matmul(h, w[LinearSlot::kKey].real),
                    matmul(h, w[LinearSlot::kValue].real), c.heads, c.d_k);
  const Matrix<double> x1 = add_f64(x, matmul(att, w[LinearSlot::kOutput].real));
  const Matrix<double> up =
      map_matrix(matmul(layernorm_f64(x1, w.ln2), w[LinearSlot::kFfnUp].real), gelu);
  return add_f64(x1, matmul(up, w[LinearSlot::kFfnDown].real));
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

void ModelConfig::validate() const {
  if (layers < 0) throw ModelError("layers must be >= 0");
  if (heads < 1 || d_k < 1) throw ModelError("heads and d_k must be positive");
  if (d_model != heads * d_k) throw ModelError("d_model must equal heads * d_k");
  if (d_k % kBlockSize != 0 || ffn_dim % kBlockSize != 0 || ffn_dim < kBlockSize) {
    throw ModelError("d_k and ffn_dim must be positive multiples of 32");
  }
  if (max_seq < 1) throw ModelError("max_seq must be positive");
  if (classes < 1) throw ModelError("classes must be positive");
  if (tokens.kind != "synthetic" && tokens.kind != "file") {
    throw ModelError("token source kind must be 'synthetic' or 'file'");
  }
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"name", c.name},
          {"layers", c.layers},
          {"d_model", c.d_model},
          {"ffn_dim", c.ffn_dim},
          {"heads", c.heads},
          {"d_k", c.d_k},
          {"max_seq", c.max_seq},
          {"classes", c.classes},
          {"softmax", c.softmax == SoftmaxMode::kStrict ? "strict" : "standard"},
          {"tokens",
           {{"kind", c.tokens.kind},
            {"path", c.tokens.path},
            {"components", c.tokens.components},
            {"drift", c.tokens.drift}}}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  try {
    c.name = j.value("name", c.name);
    c.layers = j.value("layers", c.layers);
    c.d_model = j.value("d_model", c.d_model);
    c.ffn_dim = j.value("ffn_dim", 4 * c.d_model);
    c.heads = j.value("heads", c.heads);
    c.d_k = j.value("d_k", c.d_model / std::max(1, c.heads));
    c.max_seq = j.value("max_seq", c.max_seq);
    c.classes = j.value("classes", c.classes);
    const std::string sm = j.value("softmax", std::string("standard"));
    if (sm == "strict") {
      c.softmax = SoftmaxMode::kStrict;
    } else if (sm != "standard") {
      throw ModelError("softmax must be 'standard' or 'strict'");
    }
    if (j.contains("tokens")) {
      const auto& t = j.at("tokens");
      c.tokens.kind = t.value("kind", c.tokens.kind);
      c.tokens.path = t.value("path", c.tokens.path);
      c.tokens.components = t.value("components", c.tokens.components);
      c.tokens.drift = t.value("drift", c.tokens.drift);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ModelError(std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

const char* slot_name(LinearSlot s) { return kSlotNames[static_cast<std::size_t>(s)]; }

const char* to_string(ModeKind k) {
  switch (k) {
    case ModeKind::kReference:
      return "reference";
    case ModeKind::kDigital:
      return "digital";
    case ModeKind::kAnalog:
      return "analog";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

LinearWeights make_linear(Matrix<double> real) {
  LinearWeights w;
  w.mx = MxTensor::quantize(real, Orientation::kColumnMajor);
  w.real = std::move(real);
  return w;
}

EncoderModel EncoderModel::random(const ModelConfig& config, std::uint64_t seed, double spread) {
  config.validate();
  EncoderModel m;
  m.config = config;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread, spread);
  const auto d = static_cast<std::size_t>(config.d_model);
  for (int l = 0; l < config.layers; ++l) {
    EncoderLayerWeights lw;
    for (int s = 0; s < kLinearSlots; ++s) {
      const auto [in, out] = slot_shape(config, static_cast<LinearSlot>(s));
      const double sigma = std::exp2(u(rng)) / std::sqrt(static_cast<double>(in));
      lw.linear[static_cast<std::size_t>(s)] = make_linear(gaussian_matrix(in, out, sigma, rng));
    }
    lw.ln1 = random_norm(d, rng);
    lw.ln2 = random_norm(d, rng);
    m.layers.push_back(std::move(lw));
  }
  m.head = gaussian_matrix(d, static_cast<std::size_t>(config.classes),
                           1.0 / std::sqrt(static_cast<double>(d)), rng);
  return m;
}

std::string EncoderModel::hash() const {
  Fnv1a h;
  h.update(to_json(config).dump());
  for (const EncoderLayerWeights& l : layers) {
    for (const LinearWeights& w : l.linear) {
      h.update(encode_mxt1(w.mx));
      hash_matrix(h, w.real);
    }
    hash_matrix(h, norm_matrix(l.ln1, l.ln2));
  }
  hash_matrix(h, head);
  return h.hex();
}

void EncoderModel::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream f(dir / "config.json");
    if (!f) throw ModelError("cannot write " + (dir / "config.json").string());
    f << nlohmann::json{{"model", to_json(config)}, {"model_hash", hash()}}.dump(2) << "\n";
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const fs::path ld = dir / ("layer" + std::to_string(l));
    fs::create_directories(ld);
    for (int s = 0; s < kLinearSlots; ++s) {
      const LinearWeights& w = layers[l].linear[static_cast<std::size_t>(s)];
      const std::string stem = slot_name(static_cast<LinearSlot>(s));
      write_mxt1(ld / (stem + ".mxt1"), w.mx);
      write_f64m(ld / (stem + ".f64m"), w.real);
    }
    write_f64m(ld / "norm.f64m", norm_matrix(layers[l].ln1, layers[l].ln2));
  }
  write_f64m(dir / "head.f64m", head);
}

EncoderModel EncoderModel::load(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream f(dir / "config.json");
  if (!f) throw ModelError("no config.json in " + dir.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ModelError((dir / "config.json").string() + ": " + e.what());
  }
  EncoderModel m;
  m.config = model_config_from_json(j.contains("model") ? j.at("model") : j);
  const auto d = static_cast<std::size_t>(m.config.d_model);
  for (int l = 0; l < m.config.layers; ++l) {
    const fs::path ld = dir / ("layer" + std::to_string(l));
    EncoderLayerWeights lw;
    for (int s = 0; s < kLinearSlots; ++s) {
      const auto slot = static_cast<LinearSlot>(s);
      const std::string stem = slot_name(slot);
      LinearWeights w;
      w.mx = read_mxt1(ld / (stem + ".mxt1"));
      const auto [in, out] = slot_shape(m.config, slot);
      if (w.mx.rows() != in || w.mx.cols() != out ||
          w.mx.orientation() != Orientation::kColumnMajor) {
        throw ModelError((ld / (stem + ".mxt1")).string() +
                         ": expected a column-major " + std::to_string(in) + "x" +
                         std::to_string(out) + " tensor");
      }
      const fs::path real = ld / (stem + ".f64m");
      w.real = fs::exists(real) ? read_f64m(real) : w.mx.dequantize();
      if (w.real.rows() != in || w.real.cols() != out) {
        throw ModelError(real.string() + ": shape does not match the model config");
      }
      lw.linear[static_cast<std::size_t>(s)] = std::move(w);
    }
    if (fs::exists(ld / "norm.f64m")) {
      const Matrix<double> nm = read_f64m(ld / "norm.f64m");
      if (nm.rows() != 4 || nm.cols() != d) throw ModelError("norm.f64m must be 4 x d_model");
      lw.ln1 = norm_row(nm, 0);
      lw.ln2 = norm_row(nm, 2);
    } else {
      lw.ln1 = lw.ln2 = NormParams{std::vector<Bf16>(d, Bf16::one()),
                                   std::vector<Bf16>(d, Bf16::zero())};
    }
    m.layers.push_back(std::move(lw));
  }
  if (fs::exists(dir / "head.f64m")) {
    m.head = read_f64m(dir / "head.f64m");
    if (m.head.rows() != d || m.head.cols() != static_cast<std::size_t>(m.config.classes)) {
      throw ModelError("head.f64m must be d_model x classes");
    }
  } else {
    m.head = Matrix<double>(d, static_cast<std::size_t>(m.config.classes));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Elementwise stages
// ---------------------------------------------------------------------------

Matrix<Bf16> to_bf16(const Matrix<double>& m) {
  return map_matrix(m, [](double v) { return Bf16::from_double(v); });
}

Matrix<double> to_f64(const Matrix<Bf16>& m) {
  return map_matrix(m, [](Bf16 v) { return v.to_double(); });
}

Matrix<Bf16> layernorm_bf16(const Matrix<Bf16>& x, const NormParams& p) {
  if (p.gain.size() != x.cols() || p.bias.size() != x.cols()) {
    throw ModelError("layernorm: parameter width does not match the input");
  }
  Matrix<Bf16> out(x.rows(), x.cols());
  const auto count = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    // Statistics fold index-ascending in a wide accumulator and are rounded
    // to BF16 once, so a constant row centres to exactly zero.
    double sum = 0.0;
    for (Bf16 v : x.row(r)) sum += v.to_double();
    const Bf16 mean = Bf16::from_double(sum / count);
    std::vector<Bf16> centered(x.cols());
    double sq = 0.0;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      centered[c] = bf16_sub(x(r, c), mean);
      sq += bf16_mul(centered[c], centered[c]).to_double();
    }
    Bf16 var = Bf16::from_double(sq / count);
    if (var.to_double() < Bf16::min_normal().to_double()) var = Bf16::min_normal();
    const Bf16 inv_std = Bf16::from_double(1.0 / std::sqrt(var.to_double()));
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = bf16_add(bf16_mul(bf16_mul(centered[c], inv_std), p.gain[c]), p.bias[c]);
    }
  }
  return out;
}

Matrix<double> layernorm_f64(const Matrix<double>& x, const NormParams& p) {
  if (p.gain.size() != x.cols() || p.bias.size() != x.cols()) {
    throw ModelError("layernorm: parameter width does not match the input");
  }
  Matrix<double> out(x.rows(), x.cols());
  const auto n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double mean = 0.0;
    for (double v : x.row(r)) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : x.row(r)) var += (v - mean) * (v - mean);
    var = std::max(var / n, Bf16::min_normal().to_double());
    const double inv_std = 1.0 / std::sqrt(var);
    for (std::size_t c = 0; c < x.cols(); ++c) {
      out(r, c) = (x(r, c) - mean) * inv_std * p.gain[c].to_double() + p.bias[c].to_double();
    }
  }
  return out;
}

double gelu(double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); }

Bf16 gelu_bf16(Bf16 x) { return Bf16::from_double(gelu(x.to_double())); }

Matrix<Bf16> residual_add_bf16(const Matrix<Bf16>& a, const Matrix<Bf16>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ModelError("residual add: shape mismatch");
  }
  Matrix<Bf16> out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.size(); ++i) out.data()[i] = bf16_add(a.data()[i], b.data()[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

AnalogPlan AnalogPlan::build(const EncoderModel& model, const ModelCalibration& cal,
                             const AnalogConfig& cfg) {
  cfg.validate();
  const auto expected = static_cast<std::size_t>(model.config.layers * kLinearSlots);
  if (cal.layers.size() != expected) {
    throw CalibrationError("calibration has " + std::to_string(cal.layers.size()) +
                           " layers, the model needs " + std::to_string(expected));
  }
  AnalogPlan plan;
  plan.config = cfg;
  for (std::size_t i = 0; i < expected; ++i) {
    if (cal.layers[i].layer_id != static_cast<int>(i)) {
      throw CalibrationError("calibration layer ids must be 0..n-1 in order");
    }
    const int layer = static_cast<int>(i) / kLinearSlots;
    const auto slot = static_cast<LinearSlot>(static_cast<int>(i) % kLinearSlots);
    plan.linears.push_back(build_layer_model(model.layers[layer][slot].mx, cal.layers[i], cfg));
  }
  return plan;
}

ExecutionMode ExecutionMode::analog(const EncoderModel& model, const ModelCalibration& cal,
                                    const AnalogConfig& cfg) {
  return {ModeKind::kAnalog, std::make_shared<const AnalogPlan>(AnalogPlan::build(model, cal, cfg))};
}

Matrix<double> encoder_layer_forward(const Matrix<double>& x, const EncoderModel& model,
                                     int layer, const ExecutionMode& mode, LayerTrace* trace,
                                     AnalogDiagnostics* diag) {
  const ModelConfig& c = model.config;
  if (layer < 0 || layer >= c.layers) throw ModelError("layer index out of range");
  if (x.cols() != static_cast<std::size_t>(c.d_model)) {
    throw ModelError("input width does not match d_model");
  }
  if (mode.kind == ModeKind::kReference) return reference_layer(x, model, layer);
  if (mode.kind == ModeKind::kAnalog && !mode.plan) {
    throw CalibrationError("analog mode needs a calibration");
  }
  const EncoderLayerWeights& w = model.layers[layer];
  auto linear = [&](const MxTensor& in, LinearSlot s) {
    return run_linear(in, model, layer, s, mode, trace, diag);
  };

  // Stage 1: LayerNorm and the Q, K, V projections.
  const Matrix<Bf16> xb = to_bf16(x);
  const MxTensor h = quantize_rows(to_f64(layernorm_bf16(xb, w.ln1)));
  const MxTensor q = quantize_rows(linear(h, LinearSlot::kQuery));
  const MxTensor k = quantize_rows(linear(h, LinearSlot::kKey));
  const Matrix<double> v = linear(h, LinearSlot::kValue);

  // Stage 2: attention core.
  AttentionConfig ac;
  ac.heads = c.heads;
  ac.d_k = c.d_k;
  ac.softmax = c.softmax;
  const AttentionResult att = attention_forward(q, k, v, ac);

  // Stage 3: output projection and residual.
  const Matrix<Bf16> x1 = residual_add_bf16(xb, to_bf16(linear(att.output_mx, LinearSlot::kOutput)));

  // Stage 4: LayerNorm, FFN up-projection and GELU.
  const MxTensor h2 = quantize_rows(to_f64(layernorm_bf16(x1, w.ln2)));
  const Matrix<Bf16> up =
      map_matrix(to_bf16(linear(h2, LinearSlot::kFfnUp)), [](Bf16 v) { return gelu_bf16(v); });

  // Stage 5: FFN down-projection and residual.
  const Matrix<Bf16> down = to_bf16(linear(quantize_rows(to_f64(up)), LinearSlot::kFfnDown));
  return to_f64(residual_add_bf16(x1, down));
}

ForwardResult model_forward(const EncoderModel& model, const Matrix<double>& tokens,
                            const ExecutionMode& mode, std::vector<LayerTrace>* traces) {
  const ModelConfig& c = model.config;
  if (tokens.rows() == 0) throw ModelError("empty token sequence");
  if (tokens.rows() > static_cast<std::size_t>(c.max_seq)) {
    throw ModelError("sequence of " + std::to_string(tokens.rows()) + " tokens exceeds max_seq " +
                     std::to_string(c.max_seq));
  }
  if (tokens.cols() != static_cast<std::size_t>(c.d_model)) {
    throw ModelError("token width does not match d_model");
  }
  ForwardResult r;
  Matrix<double> x = mode.kind == ModeKind::kReference ? tokens : to_f64(to_bf16(tokens));
  if (traces) traces->assign(static_cast<std::size_t>(c.layers), LayerTrace{});
  for (int l = 0; l < c.layers; ++l) {
    x = encoder_layer_forward(x, model, l, mode,
                              traces ? &(*traces)[static_cast<std::size_t>(l)] : nullptr, &r.diag);
    r.layer_outputs.push_back(x);
  }
  r.logits.assign(model.head.cols(), 0.0);
  for (std::size_t j = 0; j < model.head.cols(); ++j) {
    for (std::size_t i = 0; i < model.head.rows(); ++i) r.logits[j] += x(0, i) * model.head(i, j);
  }
  r.top1 = static_cast<int>(std::max_element(r.logits.begin(), r.logits.end()) - r.logits.begin());
  r.embeddings = std::move(x);
  return r;
}

Matrix<double> synthetic_tokens(std::size_t n, std::size_t d_model, std::uint64_t seed,
                                int components, double drift) {
  if (components < 1) throw ModelError("token mixture needs at least one component");
  std::mt19937_64 rng(seed);
  const Matrix<double> means = gaussian_matrix(static_cast<std::size_t>(components), d_model, 1.0, rng);
  std::uniform_int_distribution<int> pick(0, components - 1);
  std::normal_distribution<double> noise(0.0, 0.5);
  Matrix<double> t(n, d_model);
  for (std::size_t i = 0; i < n; ++i) {
    const auto comp = static_cast<std::size_t>(pick(rng));
    const double pos = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) - 0.5 : 0.0;
    const double scale = std::exp2(drift * pos);
    for (std::size_t j = 0; j < d_model; ++j) t(i, j) = scale * (means(comp, j) + noise(rng));
  }
  return t;
}

std::vector<ExponentHistogram> collect_histograms(const EncoderModel& model,
                                                  const std::vector<Matrix<double>>& inputs) {
  if (inputs.empty()) throw CalibrationError("calibration needs at least one input batch");
  std::vector<ExponentHistogram> hist(static_cast<std::size_t>(model.config.layers * kLinearSlots));
  for (const Matrix<double>& tokens : inputs) {
    std::vector<LayerTrace> traces;
    model_forward(model, tokens, ExecutionMode::digital(), &traces);
    for (int l = 0; l < model.config.layers; ++l) {
      for (int s = 0; s < kLinearSlots; ++s) {
        const auto slot = static_cast<LinearSlot>(s);
        hist[static_cast<std::size_t>(linear_id(l, slot))].record_linear(
            traces[static_cast<std::size_t>(l)].inputs[static_cast<std::size_t>(s)],
            model.layers[l][slot].mx);
      }
    }
  }
  return hist;
}

ModelCalibration calibrate_model(const EncoderModel& model,
                                 const std::vector<Matrix<double>>& inputs,
                                 const AnalogConfig& cfg, double percentile) {
  if (inputs.empty()) throw CalibrationError("calibration needs at least one input batch");
  cfg.validate();
  const auto count = static_cast<std::size_t>(model.config.layers * kLinearSlots);
  std::vector<std::vector<MxTensor>> operands(count);
  for (const Matrix<double>& tokens : inputs) {
    std::vector<LayerTrace> traces;
    model_forward(model, tokens, ExecutionMode::digital(), &traces);
    for (std::size_t id = 0; id < count; ++id) {
      operands[id].push_back(traces[id / kLinearSlots].inputs[id % kLinearSlots]);
    }
  }
  ModelCalibration cal;
  cal.model_hash = model.hash();
  cal.config = cfg;
  cal.percentile = percentile;
  cal.layers.resize(count);
  parallel_for(count, [&](std::size_t id) {
    const int layer = static_cast<int>(id) / kLinearSlots;
    const auto slot = static_cast<LinearSlot>(static_cast<int>(id) % kLinearSlots);
    cal.layers[id] = calibrate_layer(static_cast<int>(id), operands[id],
                                     model.layers[layer][slot].mx, cfg, percentile);
  });
  return cal;
}

nlohmann::json to_json(const ModeComparison& c) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerErrors& e : c.per_layer) {
    layers.push_back({{"layer", e.layer},
                      {"digital_vs_reference", e.digital_vs_reference},
                      {"analog_vs_digital", e.analog_vs_digital}});
  }
  return {{"sequences", c.sequences},
          {"per_layer", layers},
          {"end_to_end",
           {{"digital_vs_reference", c.end_to_end_digital_vs_reference},
            {"analog_vs_digital", c.end_to_end_analog_vs_digital}}},
          {"max_abs_analog_vs_digital", c.max_abs_analog_vs_digital},
          {"top1_agreement",
           {{"digital_vs_reference", c.top1_digital_vs_reference},
            {"analog_vs_digital", c.top1_analog_vs_digital}}},
          {"diagnostics", to_json(c.diag)}};
}

ModeComparison compare_modes(const EncoderModel& model, const std::vector<Matrix<double>>& inputs,
                             const ExecutionMode& analog) {
  if (analog.kind != ModeKind::kAnalog || !analog.plan) {
    throw ModelError("compare_modes needs an analog execution mode");
  }
  if (inputs.empty()) throw ModelError("compare_modes needs at least one sequence");
  ModeComparison out;
  out.sequences = inputs.size();
  const auto layers = static_cast<std::size_t>(model.config.layers);
  out.per_layer.resize(layers);
  for (std::size_t l = 0; l < layers; ++l) out.per_layer[l].layer = static_cast<int>(l);
  std::size_t agree_dr = 0, agree_ad = 0;
  for (const Matrix<double>& tokens : inputs) {
    const ForwardResult ref = model_forward(model, tokens, ExecutionMode::reference());
    const ForwardResult dig = model_forward(model, tokens, ExecutionMode::digital());
    const ForwardResult ana = model_forward(model, tokens, analog);
    for (std::size_t l = 0; l < layers; ++l) {
      out.per_layer[l].digital_vs_reference +=
          relative_frobenius_error(dig.layer_outputs[l], ref.layer_outputs[l]);
      out.per_layer[l].analog_vs_digital +=
          relative_frobenius_error(ana.layer_outputs[l], dig.layer_outputs[l]);
      out.max_abs_analog_vs_digital = std::max(
          out.max_abs_analog_vs_digital, max_abs_diff(ana.layer_outputs[l], dig.layer_outputs[l]));
    }
    out.end_to_end_digital_vs_reference += relative_frobenius_error(dig.embeddings, ref.embeddings);
    out.end_to_end_analog_vs_digital += relative_frobenius_error(ana.embeddings, dig.embeddings);
    out.max_abs_analog_vs_digital =
        std::max(out.max_abs_analog_vs_digital, max_abs_diff(ana.embeddings, dig.embeddings));
    agree_dr += dig.top1 == ref.top1;
    agree_ad += ana.top1 == dig.top1;
    out.diag.merge(ana.diag);
  }
  const auto n = static_cast<double>(inputs.size());
  for (LayerErrors& e : out.per_layer) {
    e.digital_vs_reference /= n;
    e.analog_vs_digital /= n;
  }
  out.end_to_end_digital_vs_reference /= n;
  out.end_to_end_analog_vs_digital /= n;
  out.top1_digital_vs_reference = static_cast<double>(agree_dr) / n;
  out.top1_analog_vs_digital = static_cast<double>(agree_ad) / n;
  return out;
}

}  // namespace mxsim
