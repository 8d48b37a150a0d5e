#include <doctest.h>

#include <set>

#include "atrousfov/geometry.hpp"
#include "oracles.hpp"

using namespace afov;

namespace {

std::set<std::pair<double, double>> tap_set(const StarGeometry& g) {
  std::set<std::pair<double, double>> s;
  for (const auto& t : g.taps) s.insert({t.row, t.col});
  return s;
}

ErfMap blobs(int h, int w, const std::vector<Point>& at, double sigma, double amp = 1.0) {
  ErfMap m{h, w, std::vector<double>(static_cast<std::size_t>(h) * w, 0.0), 1};
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (const auto& p : at) {
        const double d2 = (r - p.row) * (r - p.row) + (c - p.col) * (c - p.col);
        m.values[static_cast<std::size_t>(r) * w + c] += amp * std::exp(-d2 / (2 * sigma * sigma));
      }
  return m;
}

PeakSet peaks_at(const std::vector<Point>& pts) {
  PeakSet ps;
  for (const auto& p : pts) ps.peaks.push_back(Peak{int(std::lround(p.row)), int(std::lround(p.col)), 1.0});
  return ps;
}

}  // namespace

TEST_CASE("predict_star distances") {
  const Point c{383, 384};
  CHECK(predict_star(6, 16, c).center_to_center_bottom == 576.0);
  CHECK(predict_star(12, 8, c).center_to_center_bottom == 576.0);
  CHECK(predict_star(6, 16, c).end_to_end == 608.0);
  CHECK(predict_star(6, 16, c, 40).end_to_end == 616.0);

  auto unit = predict_star(1, 1, Point{10, 10});
  CHECK(unit.center_to_center_bottom == 6.0);
  std::multiset<double> ring;
  for (std::size_t i = 1; i < unit.taps.size(); ++i) {
    ring.insert(std::max(std::abs(unit.taps[i].row - 10), std::abs(unit.taps[i].col - 10)));
  }
  CHECK(ring.count(1.0) == 8);
  CHECK(ring.count(2.0) == 8);
  CHECK(ring.count(3.0) == 8);
  const auto& bl = unit.taps[unit.bottom_left];
  const auto& br = unit.taps[unit.bottom_right];
  CHECK(bl == Point{13, 7});
  CHECK(br == Point{13, 13});
  CHECK(distance(bl, br) == 6.0);

  CHECK_THROWS_AS(predict_star(0, 16, c), std::invalid_argument);
}

TEST_CASE("star taps are 25 distinct points, symmetric about the center") {
  for (auto [r, s] : std::vector<std::pair<int, int>>{{1, 1}, {6, 16}, {12, 8}, {3, 5}}) {
    const Point c{100.0, 120.0};
    auto g = predict_star(r, s, c);
    auto set = tap_set(g);
    CHECK(g.taps.size() == 25);
    CHECK(set.size() == 25);
    std::set<std::pair<double, double>> rot, flip_r, flip_c;
    for (const auto& [row, col] : set) {
      const double dr = row - c.row, dc = col - c.col;
      rot.insert({c.row + dc, c.col - dr});
      flip_r.insert({c.row - dr, col});
      flip_c.insert({row, c.col - dc});
    }
    CHECK(rot == set);
    CHECK(flip_r == set);
    CHECK(flip_c == set);
  }
}

TEST_CASE("star geometry depends only on r*s") {
  const Point c{383, 384};
  CHECK(tap_set(predict_star(6, 16, c)) == tap_set(predict_star(12, 8, c)));
  CHECK(tap_set(predict_star(3, 32, c)) == tap_set(predict_star(24, 4, c)));
  auto base = predict_star(2, 3, Point{0, 0});
  auto dbl_r = predict_star(4, 3, Point{0, 0});
  auto dbl_s = predict_star(2, 6, Point{0, 0});
  for (std::size_t i = 0; i < base.taps.size(); ++i) {
    CHECK(dbl_r.taps[i].row == 2 * base.taps[i].row);
    CHECK(dbl_s.taps[i].col == 2 * base.taps[i].col);
  }
  CHECK(dbl_r.center_to_center_bottom == 2 * base.center_to_center_bottom);
}

TEST_CASE("FCN-D6 span and pattern") {
  CHECK(predict_fcn_d6_span(6, 16) == 384.0);
  CHECK(predict_fcn_d6_span(1, 1) == 4.0);
  CHECK(predict_fcn_d6_span(12, 8) == 384.0);
  auto g = predict_fcn_d6_pattern(6, 16, Point{383, 384});
  CHECK(g.taps.size() == 25);
  CHECK(tap_set(g).size() == 25);
  CHECK(g.taps[0] == Point{383, 384});
  CHECK(distance(g.taps[g.bottom_left], g.taps[g.bottom_right]) == 384.0);
  CHECK(g.taps[g.bottom_left].row == 383 + 192);
}

TEST_CASE("taps_in_frame at 512 keeps the inner rings") {
  auto g = predict_star(6, 16, Point{255, 256});
  auto in = taps_in_frame(g, 512, 512);
  CHECK(in.size() == 17);
  for (int i : in) CHECK(i <= 16);
  CHECK(taps_in_frame(predict_star(6, 16, Point{383, 384}), 768, 768).size() == 25);
}

TEST_CASE("detect_peaks basics") {
  ErfMap one{9, 9, std::vector<double>(81, 0.0), 1};
  one.values[4 * 9 + 6] = 2.0;
  auto p = detect_peaks(one, 2, 0.5);
  REQUIRE(p.peaks.size() == 1);
  CHECK(p.peaks[0].row == 4);
  CHECK(p.peaks[0].col == 6);
  CHECK(p.peaks[0].value == 2.0);

  ErfMap flat{9, 9, std::vector<double>(81, 1.0), 1};
  CHECK(detect_peaks(flat, 1, 0.1).peaks.empty());

  ErfMap empty;
  CHECK_THROWS_AS(detect_peaks(empty, 1, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(detect_peaks(one, 0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(detect_peaks(one, 1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(detect_peaks(one, 1, 1.5), std::invalid_argument);
}

TEST_CASE("detect_peaks threshold drops weak maxima") {
  auto m = blobs(60, 60, {{15, 15}}, 3.0, 1.0);
  auto weak = blobs(60, 60, {{45, 45}}, 3.0, 0.1);
  for (std::size_t i = 0; i < m.values.size(); ++i) m.values[i] += weak.values[i];
  CHECK(detect_peaks(m, 5, 0.05).peaks.size() == 2);
  CHECK(detect_peaks(m, 5, 0.2).peaks.size() == 1);
}

TEST_CASE("detect_peaks finds 25 synthetic blobs at the star taps") {
  const Point c{100, 101};
  auto star = predict_star(2, 8, c);
  auto m = blobs(201, 203, star.taps, 3.0);
  auto ps = detect_peaks(m, 8, 0.1);
  REQUIRE(ps.peaks.size() == 25);
  for (const auto& t : star.taps) {
    bool near = false;
    for (const auto& p : ps.peaks) near |= distance(t, Point{double(p.row), double(p.col)}) <= 1.0;
    CHECK(near);
  }
  for (std::size_t i = 1; i < ps.peaks.size(); ++i) CHECK(ps.peaks[i - 1].value >= ps.peaks[i].value);
  for (std::size_t i = 0; i < ps.peaks.size(); ++i)
    for (std::size_t j = i + 1; j < ps.peaks.size(); ++j)
      CHECK(std::max(std::abs(ps.peaks[i].row - ps.peaks[j].row),
                     std::abs(ps.peaks[i].col - ps.peaks[j].col)) >= ps.window);
}

TEST_CASE("measure_star") {
  const Point c{383, 384};
  auto star = predict_star(6, 16, c);
  auto exact = measure_star(peaks_at(star.taps), star, 16);
  CHECK(exact.matched == 25);
  CHECK(exact.n_taps == 25);
  CHECK(exact.unmatched_peaks == 0);
  REQUIRE(exact.deviation);
  CHECK(*exact.deviation == 0.0);
  CHECK(*exact.measured_bottom == 576.0);

  auto none = measure_star(PeakSet{}, star, 16);
  CHECK(none.matched == 0);
  CHECK_FALSE(none.measured_bottom);
  for (int t : none.tap_to_peak) CHECK(t == -1);

  oracle::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point> moved;
    // Displacements of at most 3 px move the corner span by at most 6 px.
    for (const auto& t : star.taps) {
      int dr, dc;
      do {
        dr = rng.integer(-3, 3);
        dc = rng.integer(-3, 3);
      } while (dr * dr + dc * dc > 9);
      moved.push_back({t.row + dr, t.col + dc});
    }
    auto m = measure_star(peaks_at(moved), star, 16);
    CHECK(m.matched == 25);
    REQUIRE(m.measured_bottom);
    CHECK(std::abs(*m.measured_bottom - 576.0) <= 6.0);
  }

  // An extra peak that is not near any tap stays unmatched.
  auto extra = peaks_at(star.taps);
  extra.peaks.push_back(Peak{10, 10, 0.5});
  auto m = measure_star(extra, star, 16);
  CHECK(m.matched == 25);
  CHECK(m.unmatched_peaks == 1);
}

TEST_CASE("measure_star takes the nearest peak first") {
  auto star = predict_star(1, 10, Point{50, 50});
  PeakSet ps;
  ps.peaks = {Peak{50, 58, 2.0}, Peak{50, 51, 1.0}};
  auto m = measure_star(ps, star, 9);
  CHECK(m.tap_to_peak[0] == 1);
  CHECK(m.tap_distance[0] == 1.0);
  CHECK(m.tap_to_peak[3] == 0);  // E tap at (50, 60)
}

TEST_CASE("gaussian_smooth") {
  auto m = blobs(40, 40, {{20, 20}}, 2.0);
  auto same = gaussian_smooth(m, 0.0);
  CHECK(same.values == m.values);
  auto s = gaussian_smooth(m, 3.0);
  double a = 0, b = 0;
  for (double v : m.values) a += v;
  for (double v : s.values) b += v;
  CHECK(b == doctest::Approx(a).epsilon(1e-6));
  CHECK(s.at(20, 17) == doctest::Approx(s.at(20, 23)).epsilon(1e-12));
  CHECK(s.at(17, 20) == doctest::Approx(s.at(23, 20)).epsilon(1e-12));
  // Blurring a sigma-2 blob by sigma 3 gives a sigma-sqrt(13) blob.
  CHECK(s.at(20, 20) / s.at(20, 24) == doctest::Approx(std::exp(16.0 / 26.0)).epsilon(1e-3));
}

TEST_CASE("gaussian fit recovers noise-free parameters") {
  GaussianParams p{2.0, 383, 397, 58, 55, 0.0};
  auto m = sample_gaussian(768, 768, p);
  auto f = fit_gaussian_2d(m);
  CHECK(f.converged);
  CHECK(std::abs(f.x_c - 383) / 383 < 1e-3);
  CHECK(std::abs(f.y_c - 397) / 397 < 1e-3);
  CHECK(std::abs(f.sigma_x - 58) / 58 < 1e-3);
  CHECK(std::abs(f.sigma_y - 55) / 55 < 1e-3);
  CHECK(std::abs(f.amplitude - 2.0) / 2.0 < 1e-3);
  CHECK(f.rms_residual < 1e-8 * 2.0);
  CHECK(f.rms_residual >= 0.0);
  for (std::size_t i = 1; i < f.accepted_costs.size(); ++i)
    CHECK(f.accepted_costs[i] <= f.accepted_costs[i - 1]);
}

TEST_CASE("gaussian fit on a symmetric blob gives equal spreads") {
  auto m = sample_gaussian(96, 96, GaussianParams{1.0, 47.3, 50.1, 9.0, 9.0, 0.1});
  auto f = fit_gaussian_2d(m);
  CHECK(f.converged);
  CHECK(std::abs(f.sigma_x - f.sigma_y) / f.sigma_x < 1e-6);
  CHECK(f.offset == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("gaussian fit is translation equivariant") {
  GaussianParams p{1.0, 40.2, 35.7, 8.0, 11.0, 0.0};
  auto a = fit_gaussian_2d(sample_gaussian(128, 128, p));
  for (auto [dx, dy] : std::vector<std::pair<int, int>>{{7, -3}, {20, 31}, {-15, 2}}) {
    GaussianParams q = p;
    q.x_c += dx;
    q.y_c += dy;
    auto b = fit_gaussian_2d(sample_gaussian(128, 128, q));
    CHECK(b.x_c - a.x_c == doctest::Approx(dx).epsilon(1e-7));
    CHECK(b.y_c - a.y_c == doctest::Approx(dy).epsilon(1e-7));
  }
}

TEST_CASE("gaussian fit with noise: cost never increases") {
  oracle::Rng rng(17);
  auto m = sample_gaussian(100, 120, GaussianParams{3.0, 60, 45, 14, 9, 0.0});
  for (double& v : m.values) v += 0.03 * rng.uniform(-1, 1);
  auto f = fit_gaussian_2d(m);
  CHECK(f.converged);
  CHECK(f.sigma_x > 0);
  CHECK(f.sigma_y > 0);
  CHECK(f.accepted_costs.size() >= 1);
  for (std::size_t i = 1; i < f.accepted_costs.size(); ++i)
    CHECK(f.accepted_costs[i] <= f.accepted_costs[i - 1]);
}

TEST_CASE("gaussian fit degenerate inputs") {
  ErfMap flat{20, 20, std::vector<double>(400, 1.0), 1};
  auto f = fit_gaussian_2d(flat);
  CHECK_FALSE(f.converged);

  ErfMap sparse{10, 10, std::vector<double>(100, 0.0), 1};
  for (int i = 0; i < 5; ++i) sparse.values[i * 11] = 1.0;
  CHECK_THROWS_AS(fit_gaussian_2d(sparse), std::invalid_argument);
}
