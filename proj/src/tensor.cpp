#include "atrousfov/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "atrousfov/fileio.hpp"

namespace afov {

std::string to_string(const Shape& s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

void check_shape(const Shape& s, const char* what) {
  if (s.height < 1 || s.width < 1 || s.channels < 1) {
    throw std::invalid_argument(std::string(what) + ": dimensions must be >= 1, got " +
                                to_string(s));
  }
}

Tensor::Tensor(Shape shape) : shape_(shape), values_(shape.size(), 0.0) {
  check_shape(shape, "Tensor");
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  check_shape(shape, "Tensor");
  if (values_.size() != shape_.size()) {
    throw std::invalid_argument("Tensor: " + std::to_string(values_.size()) +
                                " values for shape " + to_string(shape_));
  }
}

bool Tensor::all_finite() const {
  for (double v : values_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor tensor_filled(int height, int width, int channels, double value) {
  Shape s{height, width, channels};
  check_shape(s, "tensor_filled");
  return Tensor(s, std::vector<double>(s.size(), value));
}

void fill_uniform(std::span<double> out, std::uint64_t seed, double scale) {
  std::mt19937_64 gen(seed);
  constexpr double kInv53 = 1.0 / 9007199254740992.0;  // 2^-53
  for (double& v : out) {
    const double u = static_cast<double>(gen() >> 11) * kInv53;
    v = scale * (2.0 * u - 1.0);
  }
}

Tensor tensor_random(int height, int width, int channels, std::uint64_t seed, double scale) {
  Tensor t(Shape{height, width, channels});
  fill_uniform(t.values(), seed, scale);
  return t;
}

Tensor tensor_reduce_channels_sum(const Tensor& t) {
  const Shape& s = t.shape();
  Tensor out(Shape{s.height, s.width, 1});
  const double* src = t.data();
  double* dst = out.data();
  const std::size_t pixels = static_cast<std::size_t>(s.height) * s.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    double acc = 0.0;
    for (int c = 0; c < s.channels; ++c) acc += src[p * s.channels + c];
    dst[p] = acc;
  }
  return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("tensor add: shape " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
  }
  Tensor out = a;
  auto dst = out.values();
  auto src = b.values();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  return out;
}

Tensor operator*(double k, const Tensor& a) {
  Tensor out = a;
  for (double& v : out.values()) v *= k;
  return out;
}

double relative_error(std::span<const double> a, std::span<const double> b, double floor) {
  if (a.size() != b.size()) throw std::invalid_argument("relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::max(std::sqrt(na) + std::sqrt(nb), floor);
  return std::sqrt(diff) / denom;
}

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 4);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  os.write(b, 8);
}

std::uint64_t get_le(std::istream& is, int nbytes) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), nbytes);
  if (!is) throw std::runtime_error("tensor dump truncated");
  std::uint64_t v = 0;
  for (int i = nbytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  put_u32(os, static_cast<std::uint32_t>(t.height()));
  put_u32(os, static_cast<std::uint32_t>(t.width()));
  put_u32(os, static_cast<std::uint32_t>(t.channels()));
  for (double v : t.values()) put_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  Shape s;
  s.height = static_cast<std::int32_t>(get_le(is, 4));
  s.width = static_cast<std::int32_t>(get_le(is, 4));
  s.channels = static_cast<std::int32_t>(get_le(is, 4));
  check_shape(s, "read_tensor");
  std::vector<double> values(s.size());
  for (double& v : values) v = std::bit_cast<double>(get_le(is, 8));
  return Tensor(s, std::move(values));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  atomic_write(path, os.str());
}

Tensor load_tensor(const std::string& path) {
  std::istringstream is(read_file(path), std::ios::binary);
  return read_tensor(is);
}

std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace afov
