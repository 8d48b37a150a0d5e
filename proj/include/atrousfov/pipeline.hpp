#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "atrousfov/advisor.hpp"
#include "atrousfov/erf.hpp"
#include "atrousfov/geometry.hpp"
#include "atrousfov/netspec.hpp"

namespace afov {

inline constexpr int kReportSchema = 1;

/// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "ATROUSFOV_OUT";
std::string default_out_dir();

struct ErfRunOptions {
  std::string config_path;
  int n_images = 16;
  std::uint64_t image_seed = 0;
  std::string out_dir;
  std::string image_dir;
  int threads = 0;
  double gamma = 0.5;
  std::vector<std::string> argv;
};

struct ErfRunResult {
  ErfMap erf;
  NetworkPlan plan;
  std::string raw_path;
  std::string png_path;
  std::string pgm_path;
  std::string report_path;
  nlohmann::json report;
};

/// Builds the configured network, accumulates its ERF and writes erf.bin,
/// erf.png, erf.pgm and report.json into out_dir.
ErfRunResult run_erf(const ErfRunOptions& options);

enum class PatternKind { star, fcn_d6 };

struct AnalyzeOptions {
  int rate = 6;
  int stride = 16;
  double alpha = kDefaultAlpha;
  PatternKind pattern = PatternKind::star;
  bool fit_gaussian = false;
  // Non-positive values select defaults derived from rate and stride:
  // match radius s, NMS window r*s/2, smoothing sigma s/2.
  double match_radius = 0.0;
  int window = 0;
  double smooth_sigma = -1.0;
  double threshold_frac = 0.02;
  // Fraction of in-frame taps that must be matched for a passing analysis.
  double min_match_fraction = 0.8;
  int center_row = -1;
  int center_col = -1;
};

struct Analysis {
  StarGeometry predicted;
  PeakSet peaks;
  StarMatch match;
  std::vector<int> in_frame;
  int in_frame_matched = 0;
  int out_of_frame_matched = 0;
  double match_radius = 0.0;
  double smooth_sigma = 0.0;
  bool passed = false;
  std::optional<GaussianFit> fit;
};

Analysis analyze_erf(const ErfMap& erf, const AnalyzeOptions& options);

struct AnalyzeRunResult {
  Analysis analysis;
  std::string report_path;
  nlohmann::json report;
};

AnalyzeRunResult run_analyze(const std::string& erf_path, const AnalyzeOptions& options,
                             const std::string& out_dir, const std::vector<std::string>& argv);

// JSON fragments of the report schema. Reals are rounded to 4 decimals.
double round4(double v);
nlohmann::json to_json(const StarGeometry& g);
nlohmann::json to_json(const StarMatch& m, const PeakSet& peaks);
nlohmann::json to_json(const GaussianFit& f);
nlohmann::json to_json(const AdvisorReport& r);

/// Structural check of a report against schema version 1; returns the list
/// of violations (empty when valid).
std::vector<std::string> validate_report(const nlohmann::json& report);

}  // namespace afov
