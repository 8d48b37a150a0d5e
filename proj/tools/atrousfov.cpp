// atrousfov: field-of-view analysis for atrous segmentation heads.
//
// Exit codes: 0 success, 1 runtime failure (I/O), 2 usage or configuration
// error, 3 analysis completed but too few taps were matched.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "atrousfov/advisor.hpp"
#include "atrousfov/erf.hpp"
#include "atrousfov/pipeline.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;
constexpr int kExitWeakMatch = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// "768" or "1024x512" (height x width).
std::pair<int, int> parse_size(const std::string& s) {
  const auto x = s.find('x');
  try {
    std::size_t used = 0;
    if (x == std::string::npos) {
      const int v = std::stoi(s, &used);
      if (used != s.size() || v < 1) throw std::invalid_argument(s);
      return {v, v};
    }
    const int h = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string ws = s.substr(x + 1);
    const int w = std::stoi(ws, &used);
    if (used != ws.size() || h < 1 || w < 1) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::exception&) {
    throw UsageError("--size expects N or HxW, got '" + s + "'");
  }
}

int cmd_advise(const std::string& size, int stride, std::optional<int> rate, double alpha) {
  const auto [h, w] = parse_size(size);
  afov::AdvisorReport rep;
  try {
    rep = afov::advise(h, w, stride, rate, alpha);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  nlohmann::json out = {{"schema", afov::kReportSchema},
                        {"command", "advise"},
                        {"advisor", afov::to_json(rep)}};
  std::cout << out.dump(2) << "\n";
  if (rep.non_square) {
    std::cerr << "warning: non-square crop " << h << "x" << w
              << "; the star is sized to the shorter side\n";
  }
  return 0;
}

int cmd_table(double alpha) {
  std::cout << "# l s r_star r_rounded\n";
  for (const auto& row : afov::guideline_table(afov::standard_guideline_rows(), alpha)) {
    std::cout << afov::format_row(row) << "\n";
  }
  return 0;
}

int cmd_render(const std::string& erf_path, double gamma, const std::string& png,
               std::string pgm) {
  if (pgm.empty()) {
    pgm = png;
    const auto dot = pgm.rfind('.');
    pgm = (dot == std::string::npos ? pgm : pgm.substr(0, dot)) + ".pgm";
  }
  const afov::ErfMap erf = afov::ErfMap::from_tensor(afov::load_tensor(erf_path));
  afov::render_heatmap(erf, gamma, png, pgm);
  std::cout << png << "\n" << pgm << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Field-of-view analysis for atrous (dilated) segmentation heads"};
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  // advise
  auto* advise = app.add_subcommand("advise", "Recommend a base atrous rate for a crop size");
  std::string size;
  int stride = 16;
  std::optional<int> rate;
  double alpha = afov::kDefaultAlpha;
  advise->add_option("--size", size, "Crop size l, as N or HxW")->required();
  advise->add_option("--stride", stride, "Output stride s")->required()->check(CLI::PositiveNumber);
  advise->add_option("--rate", rate, "Base rate to diagnose")->check(CLI::PositiveNumber);
  advise->add_option("--alpha", alpha, "Corner margin in pixels")->capture_default_str();

  // table
  auto* table = app.add_subcommand("table", "Print the recommended rate for common crop sizes");
  table->add_option("--alpha", alpha, "Corner margin in pixels")->capture_default_str();

  // erf
  auto* erf = app.add_subcommand("erf", "Accumulate the ERF of a configured network");
  afov::ErfRunOptions erf_opts;
  erf->add_option("--config", erf_opts.config_path, "Network spec file")->required()->check(CLI::ExistingFile);
  erf->add_option("--images", erf_opts.n_images, "Number of images")->capture_default_str()->check(CLI::PositiveNumber);
  erf->add_option("--seed", erf_opts.image_seed, "Seed for synthetic images")->capture_default_str();
  erf->add_option("--out", erf_opts.out_dir, std::string("Output directory (default $") + afov::kOutDirEnv + ")");
  erf->add_option("--image-dir", erf_opts.image_dir, "Read PNG/PGM images instead of noise")->check(CLI::ExistingDirectory);
  erf->add_option("--threads", erf_opts.threads, "Worker threads (0 = all cores)")->capture_default_str();
  erf->add_option("--gamma", erf_opts.gamma, "Heatmap gamma")->capture_default_str();

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Measure the star pattern in an ERF dump");
  std::string erf_path, out_dir, pattern = "star";
  afov::AnalyzeOptions an;
  std::vector<int> center;
  analyze->add_option("--erf", erf_path, "ERF raw dump")->required()->check(CLI::ExistingFile);
  analyze->add_option("--rate", an.rate, "Base atrous rate r")->required()->check(CLI::PositiveNumber);
  analyze->add_option("--stride", an.stride, "Output stride s")->required()->check(CLI::PositiveNumber);
  analyze->add_option("--alpha", an.alpha, "Corner margin in pixels")->capture_default_str();
  analyze->add_flag("--fit-gaussian", an.fit_gaussian, "Also fit a 2D Gaussian");
  analyze->add_option("--pattern", pattern, "Predicted pattern")->check(CLI::IsMember({"star", "fcn_d6"}))->capture_default_str();
  analyze->add_option("--match-radius", an.match_radius, "Match radius in pixels (default s)");
  analyze->add_option("--window", an.window, "NMS half-window (default r*s/2)");
  analyze->add_option("--threshold", an.threshold_frac, "Peak threshold, fraction of max")->capture_default_str();
  analyze->add_option("--smooth", an.smooth_sigma, "Gaussian pre-smoothing sigma (default s/2)");
  analyze->add_option("--min-match-fraction", an.min_match_fraction, "Exit 3 below this in-frame match fraction")->capture_default_str();
  analyze->add_option("--center", center, "Center row,col (default frame center)")->delimiter(',')->expected(2);
  analyze->add_option("--out", out_dir, std::string("Output directory (default $") + afov::kOutDirEnv + ")");

  // render
  auto* render = app.add_subcommand("render", "Render an ERF dump as PNG and PGM");
  std::string png, pgm;
  double gamma = 0.5;
  render->add_option("--erf", erf_path, "ERF raw dump")->required()->check(CLI::ExistingFile);
  render->add_option("--out", png, "PNG path")->required();
  render->add_option("--pgm", pgm, "PGM path (default: PNG path with .pgm)");
  render->add_option("--gamma", gamma, "Heatmap gamma")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (advise->parsed()) return cmd_advise(size, stride, rate, alpha);
    if (table->parsed()) return cmd_table(alpha);
    if (render->parsed()) return cmd_render(erf_path, gamma, png, pgm);
    if (erf->parsed()) {
      erf_opts.argv = args;
      const auto res = afov::run_erf(erf_opts);
      for (const auto& w : res.plan.warnings) std::cerr << "warning: " << w << "\n";
      std::cout << res.report_path << "\n";
      return 0;
    }
    if (analyze->parsed()) {
      an.pattern = pattern == "star" ? afov::PatternKind::star : afov::PatternKind::fcn_d6;
      if (center.size() == 2) {
        an.center_row = center[0];
        an.center_col = center[1];
      }
      const auto res = afov::run_analyze(erf_path, an, out_dir, args);
      const auto& a = res.analysis;
      std::cout << res.report_path << "\n";
      std::cerr << "matched " << a.in_frame_matched << "/" << a.in_frame.size()
                << " in-frame taps";
      if (a.match.measured_bottom) std::cerr << ", bottom span " << *a.match.measured_bottom << " px";
      std::cerr << "\n";
      return a.passed ? 0 : kExitWeakMatch;
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const afov::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
