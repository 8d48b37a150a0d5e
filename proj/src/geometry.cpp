#include "atrousfov/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

namespace afov {

double distance(const Point& a, const Point& b) { return std::hypot(a.row - b.row, a.col - b.col); }

namespace {

void check_rate_stride(int rate, int stride) {
  if (rate < 1 || stride < 1) throw std::invalid_argument("rate and stride must be >= 1");
}

// N, NE, E, SE, S, SW, W, NW as (drow, dcol).
constexpr std::array<std::array<int, 2>, 8> kCompass = {
    {{-1, 0}, {-1, 1}, {0, 1}, {1, 1}, {1, 0}, {1, -1}, {0, -1}, {-1, -1}}};

}  // namespace

StarGeometry predict_star(int rate, int stride, Point center, double alpha) {
  check_rate_stride(rate, stride);
  StarGeometry g;
  g.center = center;
  g.rate = rate;
  g.stride = stride;
  g.alpha = alpha;
  g.taps.push_back(center);
  const double unit = static_cast<double>(rate) * stride;
  for (int k = 1; k <= 3; ++k) {
    for (std::size_t d = 0; d < kCompass.size(); ++d) {
      g.taps.push_back(Point{center.row + kCompass[d][0] * k * unit,
                             center.col + kCompass[d][1] * k * unit});
    }
  }
  g.bottom_right = 1 + 16 + 3;  // ring 3, SE
  g.bottom_left = 1 + 16 + 5;   // ring 3, SW
  g.center_to_center_bottom = 6.0 * unit;
  g.end_to_end = g.center_to_center_bottom + alpha;
  return g;
}

double predict_fcn_d6_span(int rate, int stride) {
  check_rate_stride(rate, stride);
  return 4.0 * rate * stride;
}

StarGeometry predict_fcn_d6_pattern(int rate, int stride, Point center, double alpha) {
  check_rate_stride(rate, stride);
  StarGeometry g;
  g.pattern = "fcn_d6";
  g.center = center;
  g.rate = rate;
  g.stride = stride;
  g.alpha = alpha;
  const double unit = static_cast<double>(rate) * stride;
  g.taps.push_back(center);
  for (int dr = -2; dr <= 2; ++dr) {
    for (int dc = -2; dc <= 2; ++dc) {
      if (dr == 0 && dc == 0) continue;
      if (dr == 2 && dc == -2) g.bottom_left = static_cast<int>(g.taps.size());
      if (dr == 2 && dc == 2) g.bottom_right = static_cast<int>(g.taps.size());
      g.taps.push_back(Point{center.row + dr * unit, center.col + dc * unit});
    }
  }
  g.center_to_center_bottom = predict_fcn_d6_span(rate, stride);
  g.end_to_end = g.center_to_center_bottom + alpha;
  return g;
}

std::vector<int> taps_in_frame(const StarGeometry& g, int height, int width) {
  std::vector<int> out;
  for (std::size_t i = 0; i < g.taps.size(); ++i) {
    const Point& t = g.taps[i];
    if (t.row >= 0 && t.row <= height - 1 && t.col >= 0 && t.col <= width - 1) {
      out.push_back(static_cast<int>(i));
    }
  }
  return out;
}

// --- peaks -------------------------------------------------------------------

namespace {

std::vector<double> sliding_max(const std::vector<double>& v, int h, int w, int window,
                                bool along_rows) {
  std::vector<double> out(v.size());
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double m = -INFINITY;
      if (along_rows) {
        const int lo = std::max(0, c - window), hi = std::min(w - 1, c + window);
        for (int k = lo; k <= hi; ++k) m = std::max(m, v[static_cast<std::size_t>(r) * w + k]);
      } else {
        const int lo = std::max(0, r - window), hi = std::min(h - 1, r + window);
        for (int k = lo; k <= hi; ++k) m = std::max(m, v[static_cast<std::size_t>(k) * w + c]);
      }
      out[static_cast<std::size_t>(r) * w + c] = m;
    }
  }
  return out;
}

}  // namespace

PeakSet detect_peaks(const ErfMap& erf, int window, double threshold_frac) {
  if (erf.values.empty() || erf.height < 1 || erf.width < 1) {
    throw std::invalid_argument("detect_peaks: empty map");
  }
  if (window < 1) throw std::invalid_argument("detect_peaks: window must be >= 1");
  if (!(threshold_frac > 0.0 && threshold_frac <= 1.0)) {
    throw std::invalid_argument("detect_peaks: threshold_frac must be in (0, 1]");
  }
  const int h = erf.height, w = erf.width;
  const auto local_max =
      sliding_max(sliding_max(erf.values, h, w, window, true), h, w, window, false);
  const double threshold = threshold_frac * erf.max();

  PeakSet set;
  set.window = window;
  set.threshold_frac = threshold_frac;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double v = erf.at(r, c);
      if (v != local_max[static_cast<std::size_t>(r) * w + c] || v < threshold) continue;
      bool strict = true;
      for (int rr = std::max(0, r - window); strict && rr <= std::min(h - 1, r + window); ++rr) {
        for (int cc = std::max(0, c - window); cc <= std::min(w - 1, c + window); ++cc) {
          if ((rr != r || cc != c) && erf.at(rr, cc) == v) {
            strict = false;
            break;
          }
        }
      }
      if (strict) set.peaks.push_back(Peak{r, c, v});
    }
  }
  std::stable_sort(set.peaks.begin(), set.peaks.end(),
                   [](const Peak& a, const Peak& b) { return a.value > b.value; });
  return set;
}

ErfMap gaussian_smooth(const ErfMap& erf, double sigma) {
  if (!(sigma > 0.0)) return erf;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (double& v : k) v /= total;
  const int h = erf.height, w = erf.width;
  std::vector<double> tmp(erf.values.size(), 0.0);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = std::max(-radius, -c); i <= std::min(radius, w - 1 - c); ++i) {
        acc += k[static_cast<std::size_t>(i + radius)] * erf.at(r, c + i);
      }
      tmp[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  ErfMap out = erf;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      double acc = 0.0;
      for (int i = std::max(-radius, -r); i <= std::min(radius, h - 1 - r); ++i) {
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(r + i) * w + c];
      }
      out.values[static_cast<std::size_t>(r) * w + c] = acc;
    }
  }
  return out;
}

StarMatch measure_star(const PeakSet& peaks, const StarGeometry& predicted, double match_radius) {
  StarMatch m;
  m.n_taps = static_cast<int>(predicted.taps.size());
  m.tap_to_peak.assign(predicted.taps.size(), -1);
  m.tap_distance.assign(predicted.taps.size(), -1.0);

  struct Candidate {
    double dist;
    int tap;
    int peak;
  };
  std::vector<Candidate> cands;
  for (std::size_t t = 0; t < predicted.taps.size(); ++t) {
    for (std::size_t p = 0; p < peaks.peaks.size(); ++p) {
      const Point pp{static_cast<double>(peaks.peaks[p].row),
                     static_cast<double>(peaks.peaks[p].col)};
      const double d = distance(predicted.taps[t], pp);
      if (d <= match_radius) cands.push_back({d, static_cast<int>(t), static_cast<int>(p)});
    }
  }
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.dist < b.dist; });
  std::vector<bool> peak_used(peaks.peaks.size(), false);
  for (const Candidate& c : cands) {
    auto& slot = m.tap_to_peak[static_cast<std::size_t>(c.tap)];
    if (slot >= 0 || peak_used[static_cast<std::size_t>(c.peak)]) continue;
    slot = c.peak;
    m.tap_distance[static_cast<std::size_t>(c.tap)] = c.dist;
    peak_used[static_cast<std::size_t>(c.peak)] = true;
    ++m.matched;
  }
  m.unmatched_peaks = static_cast<int>(std::count(peak_used.begin(), peak_used.end(), false));

  if (predicted.bottom_left >= 0 && predicted.bottom_right >= 0) {
    const int pl = m.tap_to_peak[static_cast<std::size_t>(predicted.bottom_left)];
    const int pr = m.tap_to_peak[static_cast<std::size_t>(predicted.bottom_right)];
    if (pl >= 0 && pr >= 0) {
      const Peak& a = peaks.peaks[static_cast<std::size_t>(pl)];
      const Peak& b = peaks.peaks[static_cast<std::size_t>(pr)];
      m.measured_bottom = std::hypot(static_cast<double>(a.row - b.row),
                                     static_cast<double>(a.col - b.col));
      m.deviation = *m.measured_bottom - predicted.center_to_center_bottom;
    }
  }
  return m;
}

// --- Gaussian fit ------------------------------------------------------------

double gaussian_2d(const GaussianParams& p, double x, double y) {
  const double dx = (x - p.x_c) / p.sigma_x;
  const double dy = (y - p.y_c) / p.sigma_y;
  return p.amplitude * std::exp(-0.5 * (dx * dx + dy * dy)) + p.offset;
}

ErfMap sample_gaussian(int height, int width, const GaussianParams& p) {
  if (height < 1 || width < 1) throw std::invalid_argument("sample_gaussian: empty frame");
  ErfMap m;
  m.height = height;
  m.width = width;
  m.values.resize(static_cast<std::size_t>(height) * width);
  for (int r = 0; r < height; ++r) {
    for (int c = 0; c < width; ++c) m.values[static_cast<std::size_t>(r) * width + c] = gaussian_2d(p, c, r);
  }
  return m;
}

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

// Parameter order: amplitude, x_c, y_c, sigma_x, sigma_y, offset.
GaussianParams unpack(const Vec6& v) { return GaussianParams{v[0], v[1], v[2], v[3], v[4], v[5]}; }

double model(const Vec6& p, double x, double y) {
  const double dx = (x - p[1]) / p[3];
  const double dy = (y - p[2]) / p[4];
  return p[0] * std::exp(-0.5 * (dx * dx + dy * dy)) + p[5];
}

double sum_sq_residual(const ErfMap& erf, const Vec6& p) {
  double cost = 0.0;
  for (int r = 0; r < erf.height; ++r) {
    for (int c = 0; c < erf.width; ++c) {
      const double e = model(p, c, r) - erf.at(r, c);
      cost += e * e;
    }
  }
  return cost;
}

// J^T J and J^T e with a forward-difference Jacobian.
void normal_equations(const ErfMap& erf, const Vec6& p, Mat6& jtj, Vec6& jte) {
  Vec6 step;
  for (int j = 0; j < 6; ++j) step[j] = 1e-6 * std::max(1.0, std::abs(p[j]));
  std::array<Vec6, 6> shifted;
  for (int j = 0; j < 6; ++j) {
    shifted[static_cast<std::size_t>(j)] = p;
    shifted[static_cast<std::size_t>(j)][j] += step[j];
  }
  jtj.setZero();
  jte.setZero();
  Vec6 row;
  for (int r = 0; r < erf.height; ++r) {
    for (int c = 0; c < erf.width; ++c) {
      const double f0 = model(p, c, r);
      for (int j = 0; j < 6; ++j) {
        row[j] = (model(shifted[static_cast<std::size_t>(j)], c, r) - f0) / step[j];
      }
      jtj.selfadjointView<Eigen::Lower>().rankUpdate(row);
      jte += row * (f0 - erf.at(r, c));
    }
  }
  jtj = jtj.selfadjointView<Eigen::Lower>();
}

}  // namespace

GaussianFit fit_gaussian_2d(const ErfMap& erf, const FitOptions& options) {
  if (erf.height < 1 || erf.width < 1 || erf.values.empty()) {
    throw std::invalid_argument("fit_gaussian_2d: empty map");
  }
  const auto nonzero = std::count_if(erf.values.begin(), erf.values.end(),
                                     [](double v) { return v != 0.0; });
  if (nonzero < 6) {
    throw std::invalid_argument("fit_gaussian_2d: need at least 6 nonzero pixels, got " +
                                std::to_string(nonzero));
  }
  GaussianFit fit;
  const auto [lo_it, hi_it] = std::minmax_element(erf.values.begin(), erf.values.end());
  const double lo = *lo_it, hi = *hi_it;
  const double range = hi - lo;
  if (!(range > 1e-12 * std::max(1.0, std::abs(hi)))) return fit;

  // Moments of the part of the map above 20% of its range.
  const double floor = lo + 0.2 * range;
  double total = 0.0, mx = 0.0, my = 0.0;
  for (int r = 0; r < erf.height; ++r) {
    for (int c = 0; c < erf.width; ++c) {
      const double w = std::max(0.0, erf.at(r, c) - floor);
      total += w;
      mx += w * c;
      my += w * r;
    }
  }
  if (!(total > 0.0)) return fit;
  mx /= total;
  my /= total;
  double vx = 0.0, vy = 0.0;
  for (int r = 0; r < erf.height; ++r) {
    for (int c = 0; c < erf.width; ++c) {
      const double w = std::max(0.0, erf.at(r, c) - floor);
      vx += w * (c - mx) * (c - mx);
      vy += w * (r - my) * (r - my);
    }
  }
  Vec6 p;
  p << range, mx, my, std::sqrt(std::max(vx / total, 0.25)), std::sqrt(std::max(vy / total, 0.25)),
      lo;

  double cost = sum_sq_residual(erf, p);
  double damping = options.initial_damping;
  const double n_pixels = static_cast<double>(erf.values.size());
  Mat6 jtj;
  Vec6 jte;
  bool fresh = false;
  for (int it = 0; it < options.max_iterations; ++it) {
    fit.iterations = it + 1;
    if (!fresh) {
      normal_equations(erf, p, jtj, jte);
      fresh = true;
    }
    Mat6 a = jtj;
    for (int j = 0; j < 6; ++j) a(j, j) += damping * std::max(jtj(j, j), 1e-12);
    const Vec6 delta = a.ldlt().solve(-jte);
    const Vec6 cand = p + delta;
    const double cand_cost =
        (delta.allFinite() && cand[3] > 0.0 && cand[4] > 0.0) ? sum_sq_residual(erf, cand) : INFINITY;
    if (cand_cost <= cost) {
      const double rel = (cost - cand_cost) / std::max(cost, 1e-300);
      p = cand;
      cost = cand_cost;
      fit.accepted_costs.push_back(cost);
      damping = std::max(damping / 10.0, 1e-12);
      fresh = false;
      if (rel < options.rel_tolerance || cost <= 1e-30 * n_pixels * hi * hi) {
        fit.converged = true;
        break;
      }
    } else {
      damping *= 10.0;
      if (damping > 1e16) {
        // No descent direction left at working precision.
        fit.converged = std::isfinite(cost);
        break;
      }
    }
  }
  const GaussianParams g = unpack(p);
  fit.amplitude = g.amplitude;
  fit.x_c = g.x_c;
  fit.y_c = g.y_c;
  fit.sigma_x = std::abs(g.sigma_x);
  fit.sigma_y = std::abs(g.sigma_y);
  fit.offset = g.offset;
  fit.rms_residual = std::sqrt(cost / n_pixels);
  if (!(fit.amplitude > 0.0)) fit.converged = false;
  return fit;
}

}  // namespace afov
