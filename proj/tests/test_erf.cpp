#include <doctest.h>

#include <filesystem>

#include "atrousfov/erf.hpp"
#include "atrousfov/image_io.hpp"
#include "oracles.hpp"

using namespace afov;
namespace fs = std::filesystem;

namespace {

NetworkGraph small_aspp(int size = 32) {
  AsppSpec spec;
  spec.base_rate = 2;
  spec.in_channels = 4;
  spec.branch_channels = 4;
  spec.image_pool = false;
  return assemble(build_encoder(2, {4}, 3), build_aspp_head(spec, 3, 4), size, size);
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("afov_erf_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("default_center") {
  CHECK(default_center(768, 768).row == 383);
  CHECK(default_center(768, 768).col == 384);
  CHECK(default_center(1, 1).row == 0);
  CHECK(default_center(1, 1).col == 0);
  CHECK(default_center(769, 769).row == 384);
  CHECK(default_center(769, 769).col == 384);
  CHECK_THROWS_AS(default_center(0, 5), std::invalid_argument);
}

TEST_CASE("central_seed") {
  auto one = central_seed(5, 5, 1, {2, 3});
  CHECK(one.at(2, 3, 0) == 1.0);
  double s = 0;
  for (double v : one.values()) s += v;
  CHECK(s == 1.0);

  auto three = central_seed(5, 5, 3, {1, 1});
  s = 0;
  for (double v : three.values()) s += v;
  CHECK(s == 3.0);
  for (int k = 0; k < 3; ++k) CHECK(three.at(1, 1, k) == 1.0);

  auto id = assemble(Fragment::identity(), Fragment::identity(), 5, 5, 3);
  auto g = tensor_reduce_channels_sum(id.grad_wrt_input(tensor_random(5, 5, 3, 1, 1.0), three));
  CHECK(g.at(1, 1) == 3.0);

  CHECK_THROWS_AS(central_seed(5, 5, 1, {5, 0}), std::invalid_argument);
  CHECK_THROWS_AS(central_seed(5, 5, 1, {0, -1}), std::invalid_argument);
}

TEST_CASE("erf_single") {
  auto id = assemble(Fragment::identity(), Fragment::identity(), 7, 6, 1);
  ErfConfig cfg;
  auto g = erf_single(id, tensor_random(7, 6, 1, 2, 1.0), cfg);
  const auto c = default_center(7, 6);
  CHECK(oracle::support(g) == std::set<std::pair<int, int>>{{c.row, c.col}});
  CHECK(g.at(c.row, c.col) == 1.0);

  FcnD6Spec lin;
  lin.rate = 2;
  lin.in_channels = 3;
  lin.channels = 2;
  lin.relu = false;
  auto linear = assemble(Fragment::identity(), build_fcn_d6_head(lin, 2, 1), 16, 16, 3);
  CHECK(erf_single(linear, tensor_random(16, 16, 3, 1, 1.0), cfg) ==
        erf_single(linear, tensor_random(16, 16, 3, 2, 1.0), cfg));

  auto net = small_aspp();
  auto img = tensor_random(32, 32, 3, 7, 1.0);
  auto want = tensor_reduce_channels_sum(
      net.grad_wrt_input(img, central_seed(32, 32, 3, default_center(32, 32))));
  CHECK(erf_single(net, img, cfg) == want);
}

TEST_CASE("custom center") {
  auto id = assemble(Fragment::identity(), Fragment::identity(), 8, 8, 1);
  ErfConfig cfg;
  cfg.center_row = 1;
  cfg.center_col = 6;
  cfg.n_images = 2;
  auto erf = erf_accumulate(id, cfg);
  CHECK(erf.at(1, 6) == 2.0);
  cfg.center_col = 8;
  CHECK_THROWS_AS(erf_accumulate(id, cfg), std::invalid_argument);
}

TEST_CASE("erf_accumulate on the identity graph counts images") {
  auto id = assemble(Fragment::identity(), Fragment::identity(), 9, 9, 1);
  ErfConfig cfg;
  cfg.n_images = 10;
  auto erf = erf_accumulate(id, cfg);
  CHECK(erf.n_accumulated == 10);
  const auto c = default_center(9, 9);
  for (int r = 0; r < 9; ++r)
    for (int col = 0; col < 9; ++col)
      CHECK(erf.at(r, col) == ((r == c.row && col == c.col) ? 10.0 : 0.0));

  cfg.n_images = 0;
  CHECK_THROWS_AS(erf_accumulate(id, cfg), std::invalid_argument);
}

TEST_CASE("erf_accumulate is ReLU of each gradient, summed") {
  auto net = small_aspp();
  ErfConfig cfg;
  cfg.n_images = 3;
  cfg.image_seed = 5;
  auto erf = erf_accumulate(net, cfg);
  std::vector<double> want(32 * 32, 0.0);
  for (int i = 0; i < 3; ++i) {
    auto g = erf_single(net, tensor_random(32, 32, 3, mix_seed(5, i), 1.0), cfg);
    for (std::size_t p = 0; p < want.size(); ++p) want[p] += std::max(0.0, g.values()[p]);
  }
  CHECK(erf.values == want);
  for (double v : erf.values) CHECK(v >= 0.0);
}

TEST_CASE("split accumulation adds up") {
  auto net = small_aspp();
  ErfConfig cfg;
  cfg.n_images = 6;
  auto full = erf_accumulate(net, cfg);
  cfg.n_images = 2;
  auto a = erf_accumulate(net, cfg);
  cfg.first_image = 2;
  cfg.n_images = 4;
  auto b = erf_accumulate(net, cfg);
  std::vector<double> sum(a.values.size());
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = a.values[i] + b.values[i];
  CHECK(relative_error(sum, full.values) < 1e-13);
}

TEST_CASE("thread count does not change the result") {
  auto net = small_aspp();
  ErfConfig cfg;
  cfg.n_images = 7;
  cfg.threads = 1;
  auto one = erf_accumulate(net, cfg);
  cfg.threads = 3;
  auto three = erf_accumulate(net, cfg);
  CHECK(one.values == three.values);
}

TEST_CASE("directory images are center-cropped and read in name order") {
  auto dir = scratch("dir");
  Image8 a{10, 12, 1, std::vector<std::uint8_t>(120, 0)};
  Image8 b{8, 8, 1, std::vector<std::uint8_t>(64, 255)};
  a.pixels[(1 + 4) * 12 + (2 + 3)] = 51;  // lands at (4, 3) after a 1-row, 2-col crop
  write_pgm((dir / "b.pgm").string(), a);
  write_pgm((dir / "c.pgm").string(), b);
  fs::create_directories(dir / "ignored.png.d");

  auto net = assemble(Fragment::identity(), Fragment::identity(), 8, 8, 3);
  ErfConfig cfg;
  cfg.image_dir = dir.string();
  auto img = erf_image(net, cfg, 0);
  CHECK(img.shape() == Shape{8, 8, 3});
  for (int k = 0; k < 3; ++k) CHECK(img.at(4, 3, k) == doctest::Approx(0.2));
  CHECK(erf_image(net, cfg, 1).at(0, 0, 0) == 1.0);

  cfg.n_images = 16;
  CHECK(erf_accumulate(net, cfg).n_accumulated == 2);

  auto empty = scratch("empty");
  cfg.image_dir = empty.string();
  CHECK_THROWS(erf_accumulate(net, cfg));

  auto big = assemble(Fragment::identity(), Fragment::identity(), 16, 16, 1);
  cfg.image_dir = dir.string();
  CHECK_THROWS(erf_accumulate(big, cfg));
  fs::remove_all(dir);
  fs::remove_all(empty);
}

TEST_CASE("heatmap rendering") {
  auto dir = scratch("heat");
  ErfMap flat{4, 5, std::vector<double>(20, 2.0), 1};
  render_heatmap(flat, 0.5, (dir / "flat.png").string(), (dir / "flat.pgm").string());
  auto png = read_png((dir / "flat.png").string());
  REQUIRE(png.channels == 3);
  for (std::size_t i = 0; i < png.pixels.size(); ++i) CHECK(png.pixels[i] == png.pixels[i % 3]);

  ErfMap hot{6, 6, std::vector<double>(36, 0.0), 1};
  hot.values[14] = 3.0;
  render_heatmap(hot, 0.5, "", (dir / "hot.pgm").string());
  auto pgm = read_pgm((dir / "hot.pgm").string());
  for (std::size_t i = 0; i < 36; ++i) CHECK(pgm.pixels[i] == (i == 14 ? 255 : 0));
  CHECK_FALSE(fs::exists(dir / "hot.png"));
  fs::remove_all(dir);
}

TEST_CASE("PGM round trip equals the quantized map") {
  auto dir = scratch("rt");
  auto net = small_aspp();
  ErfConfig cfg;
  cfg.n_images = 2;
  auto erf = erf_accumulate(net, cfg);
  const double gamma = 0.5;
  render_heatmap(erf, gamma, (dir / "e.png").string(), (dir / "e.pgm").string());
  auto pgm = read_pgm((dir / "e.pgm").string());
  CHECK(pgm.height == 32);
  CHECK(pgm.width == 32);
  const double peak = erf.max();
  for (std::size_t i = 0; i < erf.values.size(); ++i) {
    const auto want = static_cast<int>(std::lround(255.0 * std::pow(erf.values[i] / peak, gamma)));
    CHECK(int(pgm.pixels[i]) == want);
  }
  CHECK(pgm.pixels == quantize_heatmap(erf, gamma));

  auto png = read_png((dir / "e.png").string());
  CHECK(png.height == 32);
  CHECK(png.width == 32);
  fs::remove_all(dir);
}

TEST_CASE("viridis endpoints") {
  auto lo = viridis(0.0), hi = viridis(1.0);
  CHECK(lo == std::array<std::uint8_t, 3>{68, 1, 84});
  CHECK(hi == std::array<std::uint8_t, 3>{253, 231, 37});
}

TEST_CASE("ErfMap tensor round trip") {
  ErfMap m{2, 3, {0, 1, 2, 3, 4, 5}, 4};
  auto t = m.to_tensor();
  CHECK(t.shape() == Shape{2, 3, 1});
  auto back = ErfMap::from_tensor(t, 4);
  CHECK(back.values == m.values);
  CHECK_THROWS_AS(ErfMap::from_tensor(tensor_filled(2, 2, 2, 0.0)), std::invalid_argument);
}
