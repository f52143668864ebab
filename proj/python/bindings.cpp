#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "biomm/cli.hpp"
#include "biomm/error.hpp"
#include "biomm/evaluation.hpp"
#include "biomm/gradcheck_suite.hpp"
#include "biomm/ops.hpp"
#include "biomm/synth.hpp"

namespace py = pybind11;
using namespace biomm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

template <typename Op>
Array binary_op(const Array& x, const Array& k, Op op) {
  Graph g;
  return to_array(op(g.constant(to_tensor(x)), g.constant(to_tensor(k))).value());
}

SignalTrace trace_of(const std::vector<double>& samples, double hz) {
  SignalTrace t;
  t.sample_rate_hz = hz;
  t.samples = samples;
  return t;
}

FusionVariant variant_of(const std::string& name) { return parse_variant(name); }

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "C++ core of the biomm toolkit";
  m.attr("__version__") = BIOMM_VERSION;

  static py::exception<Error> base_exc(m, "Error", PyExc_RuntimeError);
  static py::exception<ValidationError> validation_exc(m, "ValidationError", PyExc_ValueError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ValidationError& e) {
      py::set_error(validation_exc, e.what());
    } catch (const Error& e) {
      py::set_error(base_exc, e.what());
    }
  });

  m.def("conv1d_valid", [](const Array& x, const Array& k, std::size_t stride) {
        return binary_op(x, k, [stride](Var a, Var b) { return conv1d_valid(a, b, stride); });
      }, py::arg("input"), py::arg("kernels"), py::arg("stride") = 1,
      "Valid 1D cross-correlation: input [C_in, L], kernels [C_out, C_in, K].");
  m.def("conv1d_full", [](const Array& x, const Array& k) {
        return binary_op(x, k, [](Var a, Var b) { return conv1d_full(a, b); });
      }, py::arg("input"), py::arg("kernels"),
      "Full (transposed) 1D convolution: input [C_in, L], kernels [C_out, C_in, K] -> [C_out, L + K - 1].");
  m.def("conv2d_valid", [](const Array& x, const Array& k, std::size_t stride) {
        return binary_op(x, k, [stride](Var a, Var b) { return conv2d_valid(a, b, stride); });
      }, py::arg("input"), py::arg("kernels"), py::arg("stride") = 1);

  m.def("gradcheck_cases", &gradcheck_case_names);
  m.def("gradcheck", [](const std::string& only, std::uint64_t seed) {
        py::list out;
        for (const auto& r : run_gradcheck_suite(only, seed)) {
          py::dict d;
          d["name"] = r.name;
          d["max_rel_error"] = r.max_rel_error;
          d["elements"] = r.elements;
          d["passed"] = r.passed();
          out.append(d);
        }
        return out;
      }, py::arg("only") = "", py::arg("seed") = 7);

  m.def("bae_chains", []() {
    BaeConfig c;
    return py::make_tuple(c.encoder_chain(), c.decoder_chain(), c.latent);
  });
  m.def("stream_widths", [](const std::string& variant) {
    ModelConfig c;
    c.variant = variant_of(variant);
    return c.stream_widths();
  }, py::arg("variant"));
  m.def("head_input_width", [](const std::string& variant) {
    ModelConfig c;
    c.variant = variant_of(variant);
    return c.head_input_width();
  }, py::arg("variant"));

  m.def("resample", [](const std::vector<double>& samples, double source_hz, double target_hz) {
    return resample(trace_of(samples, source_hz), target_hz).samples;
  }, py::arg("samples"), py::arg("source_hz"), py::arg("target_hz"));
  m.def("rescale", [](const std::vector<double>& samples) { return rescale(trace_of(samples, 1.0)).trace.samples; });
  m.def("segment", [](const std::vector<double>& samples, double hz, const std::vector<double>& frame_times,
                      std::size_t length, const std::string& alignment) {
    std::vector<std::vector<double>> out;
    for (auto& s : segment_for_frames(trace_of(samples, hz), frame_times, {length, parse_alignment(alignment)}))
      out.push_back(std::move(s.window));
    return out;
  }, py::arg("samples"), py::arg("hz"), py::arg("frame_times"), py::arg("length") = kSegmentLength,
     py::arg("alignment") = "centered");
  m.def("gen_ecg", [](double valence, double arousal, double seconds, double hz, std::uint64_t seed, double noise) {
    return gen_ecg(one_hot_label(valence, arousal, valence, 0), seconds, hz, seed, noise).samples;
  }, py::arg("valence"), py::arg("arousal"), py::arg("seconds"), py::arg("hz") = kModelRateHz, py::arg("seed") = 1,
     py::arg("noise") = 0.0);
  m.def("gen_dataset", [](const std::string& spec_json, const std::string& out) {
    gen_dataset(synth_spec_from_json(nlohmann::json::parse(spec_json)), out);
  }, py::arg("spec_json"), py::arg("out"));

  m.def("binarize_affect", &binarize_affect);
  m.def("to_quadrant", [](double v, double a) {
    const auto q = to_quadrant(v, a);
    return py::make_tuple(q.valence_scaled, q.arousal_scaled, std::string(quadrant_name(q.quadrant)));
  }, py::arg("valence"), py::arg("arousal"));
  m.def("precision", [](const std::vector<std::array<double, kTargetCount>>& predictions,
                        const std::vector<std::array<double, kTargetCount>>& labels) {
    std::vector<AffectLabel> ls;
    for (const auto& l : labels) {
      AffectLabel a;
      a.valence = l[0];
      a.arousal = l[1];
      a.liking = l[2];
      std::copy(l.begin() + 3, l.end(), a.emotions.begin());
      a.validate();
      ls.push_back(a);
    }
    const auto r = precision(predictions, ls);
    py::dict out;
    for (std::size_t t = 0; t < kTargetCount; ++t)
      out[py::str(std::string(kTargetNames[t]))] = r.precision[t] ? py::cast(*r.precision[t]) : py::none();
    out["average"] = r.average ? py::cast(*r.average) : py::none();
    return out;
  }, py::arg("predictions"), py::arg("labels"),
     "Rows are [valence, arousal, liking, 7 emotion scores]; ratings on [1, 9].");

  m.def("run_cli", [](const std::vector<std::string>& args) {
    std::vector<const char*> argv = {"biomm"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"), "Runs a CLI command in-process; returns (exit_code, stdout, stderr).");
}
