// Copyright 2026 The mxsim Authors
// SPDX-License-Identifier: Apache-2.0
//
// Thin bindings. Structured results cross the boundary as JSON text and are
// decoded by the Python package, so the C++ serializers stay the only schema.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "mxsim/analog_cim.hpp"
#include "mxsim/bf16.hpp"
#include "mxsim/calibration.hpp"
#include "mxsim/digital_linear.hpp"
#include "mxsim/mx_tensor.hpp"
#include "mxsim/mxfp.hpp"
#include "mxsim/parallel.hpp"
#include "mxsim/perf_model.hpp"
#include "mxsim/perf_tables.hpp"

namespace py = pybind11;
using namespace mxsim;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix<double> to_matrix(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Matrix<double>(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Matrix<double>& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Orientation parse_orientation(const std::string& s) {
  if (s == "row") return Orientation::kRowMajor;
  if (s == "col") return Orientation::kColumnMajor;
  throw std::invalid_argument("orientation must be 'row' or 'col'");
}

AnalogConfig analog_config(const std::string& json_text) {
  return json_text.empty() ? AnalogConfig{} : analog_config_from_json(nlohmann::json::parse(json_text));
}

}  // namespace

PYBIND11_MODULE(_mxsim, m) {
  m.attr("__version__") = MXSIM_VERSION;
  py::register_exception<PerfError>(m, "PerfError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("set_num_threads", &set_num_threads, py::arg("threads"));
  m.def("fp4_decode", [](int code) { return fp4_decode(Fp4Code(static_cast<std::uint8_t>(code & 0xF))); });
  m.def("fp4_encode", [](double x) { return fp4_encode(x).bits(); });
  m.def("bf16_round", [](double x) { return Bf16::from_double(x).to_double(); });
  m.def("block_scale_exponent", &block_scale_exponent);

  m.def(
      "quantize_dequantize",
      [](const Array& a, const std::string& orientation) {
        return to_array(MxTensor::quantize(to_matrix(a), parse_orientation(orientation)).dequantize());
      },
      py::arg("matrix"), py::arg("orientation") = "row");

  m.def(
      "digital_linear",
      [](const Array& x, const Array& w) {
        return to_array(digital_linear(MxTensor::quantize(to_matrix(x), Orientation::kRowMajor),
                                       MxTensor::quantize(to_matrix(w), Orientation::kColumnMajor)));
      },
      py::arg("x"), py::arg("w"));

  // x: rows x in, w: in x out. The layer is calibrated on x itself.
  m.def(
      "analog_linear",
      [](const Array& x, const Array& w, const std::string& config_json) {
        const AnalogConfig cfg = analog_config(config_json);
        const MxTensor xq = MxTensor::quantize(to_matrix(x), Orientation::kRowMajor);
        const MxTensor wq = MxTensor::quantize(to_matrix(w), Orientation::kColumnMajor);
        const LayerCalibration cal = calibrate_layer(0, {xq}, wq, cfg);
        const AnalogLinearResult r = analog_linear(xq, build_layer_model(wq, cal, cfg), cfg);
        return py::make_tuple(to_array(r.values), to_json(r.diag).dump());
      },
      py::arg("x"), py::arg("w"), py::arg("config_json") = "");
  m.def("unbounded_config", [] { return to_json(AnalogConfig::unbounded()).dump(); });
  m.def("default_config", [] { return to_json(AnalogConfig{}).dump(); });

  m.def("macro_tops", &macro_tops, py::arg("rows"), py::arg("cols"), py::arg("mux"),
        py::arg("f_hz"), py::arg("passes"));
  m.def("system_config", [](const std::string& name) {
    if (name == "base") return to_json(base_system()).dump();
    if (name == "large") return to_json(large_system()).dump();
    throw std::invalid_argument("system must be 'base' or 'large'");
  });
  m.def("workload", [](const std::string& name) { return to_json(builtin_workload(name)).dump(); });
  m.def("workload_names", [] {
    std::vector<std::string> names;
    for (const auto& w : builtin_workloads()) names.push_back(w.name);
    return names;
  });
  m.def(
      "evaluate",
      [](const std::string& workload_json, const std::string& system_json, int seq_len) {
        const Workload w = workload_from_json(nlohmann::json::parse(workload_json));
        const SystemConfig s = system_config_from_json(nlohmann::json::parse(system_json));
        return to_json(seq_len > 0 ? evaluate(w, s, seq_len) : model_throughput(w, s)).dump();
      },
      py::arg("workload_json"), py::arg("system_json"), py::arg("seq_len") = 0);
  m.def("system_peak", [](const std::string& system_json) {
    const TopsCurve c = system_peak(system_config_from_json(nlohmann::json::parse(system_json)));
    return py::make_tuple(c.balance_seq_len, c.peak_tops);
  });
  m.def("io_penalty", &io_penalty, py::arg("params"), py::arg("seq_len"), py::arg("d_model"),
        py::arg("batch"));
  m.def("max_batch", [](int n, int d) { return max_batch(n, d); }, py::arg("seq_len"), py::arg("d_model"));
  m.def("table_csv", [](const std::string& id) {
    std::ostringstream out;
    reproduce_table(id).write_csv(out);
    return out.str();
  });
}
