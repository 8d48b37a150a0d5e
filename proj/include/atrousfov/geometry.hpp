#pragma once

#include <optional>
#include <string>
#include <vector>

#include "atrousfov/erf.hpp"

namespace afov {

struct Point {
  double row = 0.0;
  double col = 0.0;
  bool operator==(const Point&) const = default;
};

double distance(const Point& a, const Point& b);

/// Predicted input-pixel positions of the feature units an atrous head reads,
/// plus the characteristic span between the two bottom corner taps.
struct StarGeometry {
  std::string pattern = "star";  // "star" or "fcn_d6"
  std::vector<Point> taps;
  Point center;
  int bottom_left = -1;   // index into taps
  int bottom_right = -1;  // index into taps
  double center_to_center_bottom = 0.0;
  double end_to_end = 0.0;
  int rate = 1;
  int stride = 1;
  double alpha = 32.0;
};

inline constexpr double kDefaultAlpha = 32.0;

/// Center plus 8 compass taps at each radius k*r*s, k = 1, 2, 3. Taps are
/// ordered center first, then per ring N, NE, E, SE, S, SW, W, NW (rows grow
/// downward). Bottom corners are the ring-3 SW and SE taps, 6rs apart.
StarGeometry predict_star(int rate, int stride, Point center, double alpha = kDefaultAlpha);

/// Center-to-center span of two stacked dilation-r 3x3 convs at stride s: 4rs.
double predict_fcn_d6_span(int rate, int stride);

/// The 5x5 grid of taps spaced r*s apart that two stacked dilation-r 3x3
/// convs read. Bottom corners are 4rs apart.
StarGeometry predict_fcn_d6_pattern(int rate, int stride, Point center,
                                    double alpha = kDefaultAlpha);

/// Taps whose pixel lies inside a height x width frame.
std::vector<int> taps_in_frame(const StarGeometry& g, int height, int width);

struct Peak {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct PeakSet {
  std::vector<Peak> peaks;  // value descending
  int window = 1;
  double threshold_frac = 0.0;
};

/// A pixel is a peak when it is the strict maximum of its (2*window+1)^2
/// neighborhood (clipped at the border) and at least threshold_frac times
/// the global maximum.
PeakSet detect_peaks(const ErfMap& erf, int window, double threshold_frac);

/// Separable Gaussian blur with zero borders; sigma <= 0 returns the input.
ErfMap gaussian_smooth(const ErfMap& erf, double sigma);

struct StarMatch {
  int matched = 0;
  int n_taps = 0;
  std::vector<int> tap_to_peak;      // -1 when unmatched
  std::vector<double> tap_distance;  // distance to matched peak, -1 when unmatched
  int unmatched_peaks = 0;
  std::optional<double> measured_bottom;
  std::optional<double> deviation;  // measured_bottom - center_to_center_bottom
};

/// Greedy nearest-first assignment of taps to unclaimed peaks within
/// match_radius pixels.
StarMatch measure_star(const PeakSet& peaks, const StarGeometry& predicted, double match_radius);

struct GaussianParams {
  double amplitude = 1.0;
  double x_c = 0.0;  // column
  double y_c = 0.0;  // row
  double sigma_x = 1.0;
  double sigma_y = 1.0;
  double offset = 0.0;
};

double gaussian_2d(const GaussianParams& p, double x, double y);

/// Samples gaussian_2d at integer pixel coordinates (x = column, y = row).
ErfMap sample_gaussian(int height, int width, const GaussianParams& p);

struct GaussianFit {
  double x_c = 0.0;
  double y_c = 0.0;
  double sigma_x = 0.0;
  double sigma_y = 0.0;
  double amplitude = 0.0;
  double offset = 0.0;
  double rms_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_costs;  // sum of squared residuals after each accepted step
};

struct FitOptions {
  int max_iterations = 200;
  double rel_tolerance = 1e-10;
  double initial_damping = 1e-3;
};

/// Levenberg-Marquardt fit of A*exp(-(x-xc)^2/(2sx^2) - (y-yc)^2/(2sy^2)) + offset
/// with a forward-difference Jacobian and moment-based start. Throws
/// std::invalid_argument when fewer than 6 pixels are nonzero; degenerate
/// (flat) data returns converged = false.
GaussianFit fit_gaussian_2d(const ErfMap& erf, const FitOptions& options = {});

}  // namespace afov
