#include <doctest.h>

#include <bit>
#include <cstdio>
#include <filesystem>
#include <sstream>

#include "atrousfov/tensor.hpp"
#include "oracles.hpp"

using namespace afov;

TEST_CASE("tensor_filled") {
  auto a = tensor_filled(2, 2, 1, 0.0);
  CHECK(a.size() == 4);
  for (double v : a.values()) CHECK(v == 0.0);

  auto b = tensor_filled(1, 1, 3, 1.5);
  CHECK(std::vector<double>(b.values().begin(), b.values().end()) == std::vector<double>{1.5, 1.5, 1.5});

  auto c = tensor_filled(3, 2, 2, -1.0);
  CHECK(c.size() == 12);
  for (double v : c.values()) CHECK(v == -1.0);

  CHECK_THROWS_AS(tensor_filled(0, 2, 1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(tensor_filled(2, 0, 1, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(tensor_filled(2, 2, 0, 0.0), std::invalid_argument);
}

TEST_CASE("tensor values length must match shape") {
  CHECK_THROWS_AS(Tensor(Shape{2, 2, 1}, std::vector<double>(3)), std::invalid_argument);
}

TEST_CASE("tensor_random is deterministic and bounded") {
  auto a = tensor_random(5, 4, 3, 77, 2.5);
  auto b = tensor_random(5, 4, 3, 77, 2.5);
  CHECK(a == b);
  for (double v : a.values()) {
    CHECK(v >= -2.5);
    CHECK(v <= 2.5);
  }

  auto z = tensor_random(3, 3, 2, 5, 0.0);
  for (double v : z.values()) CHECK(v == 0.0);

  auto s1 = tensor_random(4, 4, 1, 1, 1.0);
  auto s2 = tensor_random(4, 4, 1, 2, 1.0);
  bool differ = false;
  for (std::size_t i = 0; i < s1.size(); ++i) differ |= s1.values()[i] != s2.values()[i];
  CHECK(differ);
}

TEST_CASE("tensor_random follows the documented generator") {
  // The C++ standard fixes the 10000th output of mt19937_64 seeded with
  // 5489 at 9981545732273789042; the value map is 2*(u >> 11)*2^-53 - 1.
  auto t = tensor_random(100, 100, 1, 5489, 1.0);
  const std::uint64_t u = 9981545732273789042ull;
  const double expect = 2.0 * static_cast<double>(u >> 11) / 9007199254740992.0 - 1.0;
  CHECK(t.values()[9999] == expect);
}

TEST_CASE("tensor_random mean and spread look uniform") {
  auto t = tensor_random(64, 64, 4, 9, 1.0);
  double mean = 0.0, sq = 0.0;
  for (double v : t.values()) {
    mean += v;
    sq += v * v;
  }
  mean /= t.size();
  sq /= t.size();
  CHECK(std::abs(mean) < 0.02);
  CHECK(sq == doctest::Approx(1.0 / 3.0).epsilon(0.03));
}

TEST_CASE("tensor_reduce_channels_sum") {
  Tensor a(Shape{1, 1, 3}, {1, 2, 3});
  auto r = tensor_reduce_channels_sum(a);
  CHECK(r.shape() == Shape{1, 1, 1});
  CHECK(r.at(0, 0) == 6.0);

  auto one = tensor_random(3, 4, 1, 3, 1.0);
  CHECK(tensor_reduce_channels_sum(one) == one);

  auto t = tensor_random(2, 2, 2, 11, 1.0);
  auto s = tensor_reduce_channels_sum(t);
  for (int h = 0; h < 2; ++h)
    for (int w = 0; w < 2; ++w) CHECK(s.at(h, w) == t.at(h, w, 0) + t.at(h, w, 1));
}

TEST_CASE("tensor_reduce_channels_sum is linear") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    oracle::Rng rng(seed);
    Shape sh{rng.integer(1, 6), rng.integer(1, 6), rng.integer(1, 5)};
    auto a = rng.tensor(sh);
    auto b = rng.tensor(sh);
    auto lhs = tensor_reduce_channels_sum(a + b);
    auto rhs = tensor_reduce_channels_sum(a) + tensor_reduce_channels_sum(b);
    CHECK(relative_error(lhs.values(), rhs.values()) < 1e-14);
  }
}

TEST_CASE("tensor dump layout") {
  Tensor t(Shape{1, 2, 1}, {1.0, -0.5});
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  const std::string bytes = os.str();
  REQUIRE(bytes.size() == 12 + 16);
  auto u32 = [&](int off) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + i]);
    return v;
  };
  auto f64 = [&](int off) {
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[off + i]);
    return std::bit_cast<double>(v);
  };
  CHECK(u32(0) == 1);
  CHECK(u32(4) == 2);
  CHECK(u32(8) == 1);
  CHECK(f64(12) == 1.0);
  CHECK(f64(20) == -0.5);

  std::istringstream is(bytes, std::ios::binary);
  CHECK(read_tensor(is) == t);

  std::istringstream cut(bytes.substr(0, 20), std::ios::binary);
  CHECK_THROWS(read_tensor(cut));
}

TEST_CASE("save and load round trip") {
  const auto path = (std::filesystem::temp_directory_path() / "afov_tensor_rt.bin").string();
  auto t = tensor_random(7, 5, 3, 123, 4.0);
  save_tensor(path, t);
  CHECK(load_tensor(path) == t);
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  std::filesystem::remove(path);
}

TEST_CASE("mix_seed spreads indices") {
  CHECK(mix_seed(0, 0) != mix_seed(0, 1));
  CHECK(mix_seed(1, 0) != mix_seed(0, 1));
  CHECK(mix_seed(42, 3) == mix_seed(42, 3));
}

TEST_CASE("relative_error") {
  std::vector<double> a{3, 4}, b{3, 4}, c{0, 0};
  CHECK(relative_error(a, b) == 0.0);
  CHECK(relative_error(a, c) == doctest::Approx(1.0));
  CHECK(relative_error(c, c) == 0.0);
}
