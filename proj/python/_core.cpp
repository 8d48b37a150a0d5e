#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "atrousfov/advisor.hpp"
#include "atrousfov/diff_ops.hpp"
#include "atrousfov/erf.hpp"
#include "atrousfov/geometry.hpp"
#include "atrousfov/pipeline.hpp"

namespace py = pybind11;
using namespace afov;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, C) array -> Tensor.
Tensor to_tensor(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw std::invalid_argument("expected a 2-D or 3-D array");
  Shape s{static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
          a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1};
  return Tensor(s, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out({t.height(), t.width(), t.channels()});
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

Array map_to_array(const ErfMap& m) {
  Array out({m.height, m.width});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

ErfMap to_map(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D array");
  ErfMap m;
  m.height = static_cast<int>(a.shape(0));
  m.width = static_cast<int>(a.shape(1));
  m.values.assign(a.data(), a.data() + a.size());
  return m;
}

// Kernel weights as a (kh, kw, in, out) array.
Kernel to_kernel(const Array& w, std::optional<Array> bias) {
  if (w.ndim() != 4) throw std::invalid_argument("kernel must be (kh, kw, in, out)");
  Kernel k(static_cast<int>(w.shape(0)), static_cast<int>(w.shape(1)), static_cast<int>(w.shape(2)),
           static_cast<int>(w.shape(3)));
  k.weights.assign(w.data(), w.data() + w.size());
  if (bias) k.bias.assign(bias->data(), bias->data() + bias->size());
  k.validate();
  return k;
}

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Field-of-view analysis for atrous segmentation heads";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<GraphBuildError>(m, "GraphBuildError", PyExc_ValueError);

  m.def("tensor_random",
        [](int h, int w, int c, std::uint64_t seed, double scale) {
          return to_array(tensor_random(h, w, c, seed, scale));
        },
        py::arg("height"), py::arg("width"), py::arg("channels"), py::arg("seed"), py::arg("scale") = 1.0);
  m.def("mix_seed", &mix_seed, py::arg("base"), py::arg("index"));

  m.def("conv2d",
        [](const Array& x, const Array& w, std::optional<Array> bias, int stride, int dilation, int padding) {
          return to_array(conv2d_forward(to_tensor(x), to_kernel(w, bias), ConvSpec{stride, dilation, padding}));
        },
        py::arg("x"), py::arg("weights"), py::arg("bias") = py::none(), py::arg("stride") = 1,
        py::arg("dilation") = 1, py::arg("padding") = 0);
  m.def("conv2d_input_grad",
        [](const Array& gy, const Array& w, py::tuple in_shape, int stride, int dilation, int padding) {
          const Shape s{in_shape[0].cast<int>(), in_shape[1].cast<int>(), in_shape[2].cast<int>()};
          return to_array(conv2d_input_grad(to_tensor(gy), to_kernel(w, std::nullopt), ConvSpec{stride, dilation, padding}, s));
        },
        py::arg("gy"), py::arg("weights"), py::arg("input_shape"), py::arg("stride") = 1,
        py::arg("dilation") = 1, py::arg("padding") = 0);

  m.def("legacy_rate", &legacy_rate, py::arg("stride"));
  m.def("optimal_rate", &optimal_rate, py::arg("image_size"), py::arg("stride"), py::arg("alpha") = kDefaultAlpha);
  m.def("round_rate", &round_rate, py::arg("r_star"));
  m.def("validate_config",
        [](double l, int s, int r, double alpha) {
          const auto c = validate_config(l, s, r, alpha);
          return py::dict(py::arg("fov") = c.fov, py::arg("image_size") = c.image_size,
                          py::arg("diagnosis") = to_string(c.diagnosis));
        },
        py::arg("image_size"), py::arg("stride"), py::arg("rate"), py::arg("alpha") = kDefaultAlpha);
  m.def("guideline_table",
        [](double alpha) {
          std::vector<std::string> rows;
          for (const auto& r : guideline_table(standard_guideline_rows(), alpha)) rows.push_back(format_row(r));
          return rows;
        },
        py::arg("alpha") = kDefaultAlpha);
  m.def("advise",
        [](int h, int w, int s, std::optional<int> rate, double alpha) {
          return to_py(to_json(advise(h, w, s, rate, alpha)));
        },
        py::arg("height"), py::arg("width"), py::arg("stride"), py::arg("rate") = py::none(),
        py::arg("alpha") = kDefaultAlpha);

  m.def("predict_star",
        [](int r, int s, std::pair<double, double> center, double alpha) {
          return to_py(to_json(predict_star(r, s, Point{center.first, center.second}, alpha)));
        },
        py::arg("rate"), py::arg("stride"), py::arg("center"), py::arg("alpha") = kDefaultAlpha);
  m.def("predict_fcn_d6_span", &predict_fcn_d6_span, py::arg("rate"), py::arg("stride"));
  m.def("detect_peaks",
        [](const Array& erf, int window, double threshold) {
          std::vector<std::tuple<int, int, double>> out;
          for (const auto& p : detect_peaks(to_map(erf), window, threshold).peaks) out.emplace_back(p.row, p.col, p.value);
          return out;
        },
        py::arg("erf"), py::arg("window"), py::arg("threshold_frac"));
  m.def("fit_gaussian",
        [](const Array& erf) { return to_py(to_json(fit_gaussian_2d(to_map(erf)))); }, py::arg("erf"));
  m.def("sample_gaussian",
        [](int h, int w, double amplitude, double x_c, double y_c, double sx, double sy, double offset) {
          return map_to_array(sample_gaussian(h, w, GaussianParams{amplitude, x_c, y_c, sx, sy, offset}));
        },
        py::arg("height"), py::arg("width"), py::arg("amplitude"), py::arg("x_c"), py::arg("y_c"),
        py::arg("sigma_x"), py::arg("sigma_y"), py::arg("offset") = 0.0);

  m.def("erf",
        [](const std::string& config_path, int n_images, std::uint64_t seed, int threads) {
          const auto net = build_network(load_network_config(config_path));
          ErfConfig cfg;
          cfg.n_images = n_images;
          cfg.image_seed = seed;
          cfg.threads = threads;
          ErfMap map;
          {
            py::gil_scoped_release release;
            map = erf_accumulate(net, cfg);
          }
          return map_to_array(map);
        },
        py::arg("config"), py::arg("n_images") = 16, py::arg("seed") = 0, py::arg("threads") = 0);
  m.def("run_erf",
        [](const std::string& config_path, int n_images, std::uint64_t seed, const std::string& out_dir, int threads) {
          ErfRunOptions o;
          o.config_path = config_path;
          o.n_images = n_images;
          o.image_seed = seed;
          o.out_dir = out_dir;
          o.threads = threads;
          ErfRunResult res;
          {
            py::gil_scoped_release release;
            res = run_erf(o);
          }
          return to_py(res.report);
        },
        py::arg("config"), py::arg("n_images") = 16, py::arg("seed") = 0, py::arg("out_dir") = "",
        py::arg("threads") = 0);
  m.def("analyze",
        [](const Array& erf, int rate, int stride, const std::string& pattern, bool fit, double alpha) {
          AnalyzeOptions o;
          o.rate = rate;
          o.stride = stride;
          o.alpha = alpha;
          o.fit_gaussian = fit;
          if (pattern == "fcn_d6") o.pattern = PatternKind::fcn_d6;
          else if (pattern != "star") throw std::invalid_argument("pattern must be 'star' or 'fcn_d6'");
          const auto a = analyze_erf(to_map(erf), o);
          nlohmann::json j = {{"star", to_json(a.predicted)},
                              {"match", to_json(a.match, a.peaks)},
                              {"in_frame_taps", a.in_frame.size()},
                              {"in_frame_matched", a.in_frame_matched},
                              {"passed", a.passed},
                              {"gaussian_fit", a.fit ? to_json(*a.fit) : nlohmann::json(nullptr)}};
          return to_py(j);
        },
        py::arg("erf"), py::arg("rate"), py::arg("stride"), py::arg("pattern") = "star",
        py::arg("fit_gaussian") = false, py::arg("alpha") = kDefaultAlpha);
  m.def("load_tensor", [](const std::string& path) { return to_array(load_tensor(path)); }, py::arg("path"));
  m.def("validate_report",
        [](py::object report) {
          const auto text = py::module_::import("json").attr("dumps")(report).cast<std::string>();
          return validate_report(nlohmann::json::parse(text));
        },
        py::arg("report"));

  m.attr("REPORT_SCHEMA") = kReportSchema;
  m.attr("DEFAULT_ALPHA") = kDefaultAlpha;
}
