#include "atrousfov/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>

#include "atrousfov/fileio.hpp"

namespace afov {

using nlohmann::json;
namespace fs = std::filesystem;

std::string default_out_dir() {
  const char* env = std::getenv(kOutDirEnv);
  return env && *env ? env : "atrousfov_out";
}

double round4(double v) {
  if (!std::isfinite(v)) return v;
  const double r = std::round(v * 1e4) / 1e4;
  return r == 0.0 ? 0.0 : r;  // no negative zero in reports
}

json to_json(const StarGeometry& g) {
  json taps = json::array();
  for (const Point& t : g.taps) taps.push_back({round4(t.row), round4(t.col)});
  return {{"pattern", g.pattern},
          {"rate", g.rate},
          {"stride", g.stride},
          {"alpha", round4(g.alpha)},
          {"center", {round4(g.center.row), round4(g.center.col)}},
          {"taps", taps},
          {"bottom_left", g.bottom_left},
          {"bottom_right", g.bottom_right},
          {"center_to_center_bottom", round4(g.center_to_center_bottom)},
          {"end_to_end", round4(g.end_to_end)}};
}

json to_json(const StarMatch& m, const PeakSet& peaks) {
  json per_tap = json::array();
  for (std::size_t t = 0; t < m.tap_to_peak.size(); ++t) {
    json j = {{"tap", static_cast<int>(t)}};
    if (m.tap_to_peak[t] >= 0) {
      j["peak"] = m.tap_to_peak[t];
      j["distance"] = round4(m.tap_distance[t]);
    } else {
      j["peak"] = nullptr;
      j["distance"] = nullptr;
    }
    per_tap.push_back(j);
  }
  json pk = json::array();
  for (const Peak& p : peaks.peaks) pk.push_back({p.row, p.col, round4(p.value)});
  json out = {{"matched", m.matched},
              {"n_taps", m.n_taps},
              {"unmatched_peaks", m.unmatched_peaks},
              {"window", peaks.window},
              {"threshold_frac", round4(peaks.threshold_frac)},
              {"taps", per_tap},
              {"peaks", pk}};
  out["measured_bottom"] = m.measured_bottom ? json(round4(*m.measured_bottom)) : json(nullptr);
  out["deviation"] = m.deviation ? json(round4(*m.deviation)) : json(nullptr);
  return out;
}

json to_json(const GaussianFit& f) {
  return {{"x_c", round4(f.x_c)},
          {"y_c", round4(f.y_c)},
          {"sigma_x", round4(f.sigma_x)},
          {"sigma_y", round4(f.sigma_y)},
          {"amplitude", round4(f.amplitude)},
          {"offset", round4(f.offset)},
          {"rms_residual", round4(f.rms_residual)},
          {"iterations", f.iterations},
          {"converged", f.converged}};
}

json to_json(const AdvisorReport& r) {
  json j = {{"height", r.height},
            {"width", r.width},
            {"image_size", round4(r.image_size)},
            {"non_square", r.non_square},
            {"stride", r.stride},
            {"alpha", round4(r.alpha)},
            {"r_star", round4(r.r_star)},
            {"r_rounded", r.r_rounded},
            {"fov_end_to_end", round4(r.fov_end_to_end)},
            {"diagnosis_at_rounded", to_string(r.rounded_diagnosis)}};
  j["legacy_rate"] = r.legacy_rate ? json(*r.legacy_rate) : json(nullptr);
  if (r.checked) {
    j["check"] = {{"rate", *r.checked_rate},
                  {"fov", round4(r.checked->fov)},
                  {"image_size", round4(r.checked->image_size)},
                  {"diagnosis", to_string(r.checked->diagnosis)}};
  } else {
    j["check"] = nullptr;
  }
  return j;
}

namespace {

json erf_summary(const ErfMap& erf, PixelIndex center) {
  return {{"height", erf.height},
          {"width", erf.width},
          // Raw dumps do not record the image count.
          {"n_accumulated", erf.n_accumulated > 0 ? json(erf.n_accumulated) : json(nullptr)},
          {"center", {center.row, center.col}},
          {"max", round4(erf.max())}};
}

void write_report(const std::string& path, const json& report) {
  atomic_write(path, report.dump(2) + "\n");
}

}  // namespace

ErfRunResult run_erf(const ErfRunOptions& options) {
  const auto t0 = std::chrono::steady_clock::now();
  ErfRunResult res;
  res.plan = load_network_config(options.config_path);
  const NetworkGraph net = build_network(res.plan);

  ErfConfig cfg;
  cfg.n_images = options.n_images;
  cfg.image_seed = options.image_seed;
  cfg.image_dir = options.image_dir;
  cfg.threads = options.threads;
  res.erf = erf_accumulate(net, cfg);
  const PixelIndex center = resolve_center(net, cfg);

  const std::string out_dir = options.out_dir.empty() ? default_out_dir() : options.out_dir;
  fs::create_directories(out_dir);
  res.raw_path = (fs::path(out_dir) / "erf.bin").string();
  res.png_path = (fs::path(out_dir) / "erf.png").string();
  res.pgm_path = (fs::path(out_dir) / "erf.pgm").string();
  res.report_path = (fs::path(out_dir) / "report.json").string();
  save_tensor(res.raw_path, res.erf.to_tensor());
  render_heatmap(res.erf, options.gamma, res.png_path, res.pgm_path);

  const Point c{static_cast<double>(center.row), static_cast<double>(center.col)};
  const StarGeometry predicted = res.plan.head == HeadKind::aspp
                                     ? predict_star(res.plan.rate, net.output_stride(), c)
                                     : predict_fcn_d6_pattern(res.plan.rate, net.output_stride(), c);

  json& r = res.report;
  r["schema"] = kReportSchema;
  r["command"] = "erf";
  r["argv"] = options.argv;
  r["seeds"] = {{"network", res.plan.seed}, {"images", options.image_seed}};
  r["network"] = {{"digest", res.plan.digest()},
                  {"spec", res.plan.canonical()},
                  {"head", to_string(res.plan.head)},
                  {"output_stride", net.output_stride()},
                  {"n_classes", net.n_classes()},
                  {"input", {net.input_shape().height, net.input_shape().width,
                             net.input_shape().channels}}};
  r["warnings"] = res.plan.warnings;
  r["files"] = {{"erf_raw", res.raw_path}, {"png", res.png_path}, {"pgm", res.pgm_path}};
  r["images"] = options.image_dir.empty() ? json("synthetic-noise") : json(options.image_dir);
  r["erf"] = erf_summary(res.erf, center);
  r["star"] = to_json(predicted);
  r["match"] = nullptr;
  r["gaussian_fit"] = nullptr;
  r["advisor"] = nullptr;
  r["wall_clock_seconds"] =
      round4(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  write_report(res.report_path, r);
  return res;
}

Analysis analyze_erf(const ErfMap& erf, const AnalyzeOptions& options) {
  if (erf.values.empty()) throw std::invalid_argument("analyze: empty ERF map");
  Analysis a;
  PixelIndex center = default_center(erf.height, erf.width);
  if (options.center_row >= 0) center.row = options.center_row;
  if (options.center_col >= 0) center.col = options.center_col;
  const Point c{static_cast<double>(center.row), static_cast<double>(center.col)};
  a.predicted = options.pattern == PatternKind::star
                    ? predict_star(options.rate, options.stride, c, options.alpha)
                    : predict_fcn_d6_pattern(options.rate, options.stride, c, options.alpha);

  const int unit = options.rate * options.stride;
  a.match_radius = options.match_radius > 0.0 ? options.match_radius : options.stride;
  a.smooth_sigma = options.smooth_sigma >= 0.0 ? options.smooth_sigma : options.stride / 2.0;
  const int window = options.window > 0 ? options.window : std::max(1, unit / 2);

  a.peaks = detect_peaks(gaussian_smooth(erf, a.smooth_sigma), window, options.threshold_frac);
  a.match = measure_star(a.peaks, a.predicted, a.match_radius);
  a.in_frame = taps_in_frame(a.predicted, erf.height, erf.width);
  std::vector<bool> inside(a.predicted.taps.size(), false);
  for (int t : a.in_frame) inside[static_cast<std::size_t>(t)] = true;
  for (std::size_t t = 0; t < a.predicted.taps.size(); ++t) {
    if (a.match.tap_to_peak[t] < 0) continue;
    (inside[t] ? a.in_frame_matched : a.out_of_frame_matched) += 1;
  }
  const double needed = std::ceil(options.min_match_fraction * static_cast<double>(a.in_frame.size()));
  a.passed = !a.in_frame.empty() && a.in_frame_matched >= needed && a.out_of_frame_matched == 0;
  if (options.fit_gaussian) a.fit = fit_gaussian_2d(erf);
  return a;
}

AnalyzeRunResult run_analyze(const std::string& erf_path, const AnalyzeOptions& options,
                             const std::string& out_dir_opt, const std::vector<std::string>& argv) {
  const auto t0 = std::chrono::steady_clock::now();
  AnalyzeRunResult res;
  const ErfMap erf = ErfMap::from_tensor(load_tensor(erf_path));
  res.analysis = analyze_erf(erf, options);
  const Analysis& a = res.analysis;

  const std::string out_dir = out_dir_opt.empty() ? default_out_dir() : out_dir_opt;
  fs::create_directories(out_dir);
  res.report_path = (fs::path(out_dir) / "report.json").string();

  json& r = res.report;
  r["schema"] = kReportSchema;
  r["command"] = "analyze";
  r["argv"] = argv;
  r["seeds"] = {{"network", nullptr}, {"images", nullptr}};
  r["network"] = nullptr;
  r["warnings"] = json::array();
  r["files"] = {{"erf_raw", erf_path}, {"png", nullptr}, {"pgm", nullptr}};
  r["images"] = nullptr;
  r["erf"] = erf_summary(erf, PixelIndex{static_cast<int>(a.predicted.center.row),
                                         static_cast<int>(a.predicted.center.col)});
  r["star"] = to_json(a.predicted);
  json m = to_json(a.match, a.peaks);
  m["match_radius"] = round4(a.match_radius);
  m["smooth_sigma"] = round4(a.smooth_sigma);
  m["in_frame_taps"] = a.in_frame.size();
  m["in_frame_matched"] = a.in_frame_matched;
  m["out_of_frame_matched"] = a.out_of_frame_matched;
  m["min_match_fraction"] = round4(options.min_match_fraction);
  m["passed"] = a.passed;
  r["match"] = m;
  r["gaussian_fit"] = a.fit ? to_json(*a.fit) : json(nullptr);
  try {
    r["advisor"] = to_json(advise(erf.height, erf.width, options.stride, options.rate, options.alpha));
  } catch (const std::invalid_argument&) {
    r["advisor"] = nullptr;  // frame smaller than alpha
  }
  r["wall_clock_seconds"] =
      round4(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  write_report(res.report_path, r);
  return res;
}

// --- schema check ------------------------------------------------------------

namespace {

struct Checker {
  std::vector<std::string> problems;

  const json* require(const json& obj, const std::string& path, const char* key) {
    if (!obj.is_object() || !obj.contains(key)) {
      problems.push_back(path + "." + key + ": missing");
      return nullptr;
    }
    return &obj.at(key);
  }
  void number(const json& obj, const std::string& path, const char* key, bool nullable = false) {
    if (const json* v = require(obj, path, key)) {
      if (!(v->is_number() || (nullable && v->is_null()))) problems.push_back(path + "." + key + ": expected number");
    }
  }
  void integer(const json& obj, const std::string& path, const char* key, bool nullable = false) {
    if (const json* v = require(obj, path, key)) {
      if (!(v->is_number_integer() || (nullable && v->is_null()))) problems.push_back(path + "." + key + ": expected integer");
    }
  }
  void string(const json& obj, const std::string& path, const char* key, bool nullable = false) {
    if (const json* v = require(obj, path, key)) {
      if (!(v->is_string() || (nullable && v->is_null()))) problems.push_back(path + "." + key + ": expected string");
    }
  }
  void boolean(const json& obj, const std::string& path, const char* key) {
    if (const json* v = require(obj, path, key)) {
      if (!v->is_boolean()) problems.push_back(path + "." + key + ": expected boolean");
    }
  }
  bool object_or_null(const json& obj, const std::string& path, const char* key) {
    const json* v = require(obj, path, key);
    if (!v) return false;
    if (v->is_null()) return false;
    if (!v->is_object()) {
      problems.push_back(path + "." + key + ": expected object or null");
      return false;
    }
    return true;
  }
};

void check_advisor(Checker& c, const json& a, const std::string& p) {
  for (const char* k : {"height", "width", "stride", "r_rounded"}) c.integer(a, p, k);
  for (const char* k : {"image_size", "alpha", "r_star", "fov_end_to_end"}) c.number(a, p, k);
  c.boolean(a, p, "non_square");
  c.integer(a, p, "legacy_rate", true);
  c.string(a, p, "diagnosis_at_rounded");
  if (c.object_or_null(a, p, "check")) {
    c.integer(a["check"], p + ".check", "rate");
    c.number(a["check"], p + ".check", "fov");
    c.string(a["check"], p + ".check", "diagnosis");
  }
}

}  // namespace

std::vector<std::string> validate_report(const json& report) {
  Checker c;
  const std::string root = "$";
  if (!report.is_object()) return {"$: expected object"};
  if (const json* s = c.require(report, root, "schema")) {
    if (*s != kReportSchema) c.problems.push_back("$.schema: expected 1");
  }
  c.string(report, root, "command");
  const std::string cmd = report.value("command", "");
  if (cmd == "advise") {
    if (c.object_or_null(report, root, "advisor")) check_advisor(c, report["advisor"], "$.advisor");
    else c.problems.push_back("$.advisor: required for advise");
    return c.problems;
  }
  if (cmd != "erf" && cmd != "analyze") {
    c.problems.push_back("$.command: unknown command '" + cmd + "'");
    return c.problems;
  }
  if (const json* a = c.require(report, root, "argv"); a && !a->is_array()) {
    c.problems.push_back("$.argv: expected array");
  }
  if (c.object_or_null(report, root, "seeds")) {
    c.integer(report["seeds"], "$.seeds", "network", true);
    c.integer(report["seeds"], "$.seeds", "images", true);
  } else {
    c.problems.push_back("$.seeds: expected object");
  }
  if (c.object_or_null(report, root, "network")) {
    const json& n = report["network"];
    c.string(n, "$.network", "digest");
    c.string(n, "$.network", "spec");
    c.integer(n, "$.network", "output_stride");
    c.integer(n, "$.network", "n_classes");
  } else if (cmd == "erf") {
    c.problems.push_back("$.network: required for erf");
  }
  if (c.object_or_null(report, root, "files")) {
    c.string(report["files"], "$.files", "erf_raw");
    c.string(report["files"], "$.files", "png", true);
    c.string(report["files"], "$.files", "pgm", true);
  } else {
    c.problems.push_back("$.files: expected object");
  }
  if (c.object_or_null(report, root, "erf")) {
    const json& e = report["erf"];
    c.integer(e, "$.erf", "height");
    c.integer(e, "$.erf", "width");
    c.integer(e, "$.erf", "n_accumulated", true);
    c.number(e, "$.erf", "max");
  } else {
    c.problems.push_back("$.erf: expected object");
  }
  if (c.object_or_null(report, root, "star")) {
    const json& s = report["star"];
    c.string(s, "$.star", "pattern");
    c.integer(s, "$.star", "rate");
    c.integer(s, "$.star", "stride");
    for (const char* k : {"alpha", "center_to_center_bottom", "end_to_end"}) c.number(s, "$.star", k);
    if (const json* t = c.require(s, "$.star", "taps"); t && (!t->is_array() || t->size() != 25)) {
      c.problems.push_back("$.star.taps: expected 25 points");
    }
  } else {
    c.problems.push_back("$.star: expected object");
  }
  if (c.object_or_null(report, root, "match")) {
    const json& m = report["match"];
    c.integer(m, "$.match", "matched");
    c.integer(m, "$.match", "n_taps");
    c.number(m, "$.match", "measured_bottom", true);
    c.number(m, "$.match", "deviation", true);
    c.boolean(m, "$.match", "passed");
  } else if (cmd == "analyze") {
    c.problems.push_back("$.match: required for analyze");
  }
  if (c.object_or_null(report, root, "gaussian_fit")) {
    const json& g = report["gaussian_fit"];
    for (const char* k : {"x_c", "y_c", "sigma_x", "sigma_y", "amplitude", "offset", "rms_residual"}) {
      c.number(g, "$.gaussian_fit", k);
    }
    c.integer(g, "$.gaussian_fit", "iterations");
    c.boolean(g, "$.gaussian_fit", "converged");
  }
  if (c.object_or_null(report, root, "advisor")) check_advisor(c, report["advisor"], "$.advisor");
  c.number(report, root, "wall_clock_seconds");
  return c.problems;
}

}  // namespace afov
