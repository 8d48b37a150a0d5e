#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace afov {

struct Shape {
  int height = 0;
  int width = 0;
  int channels = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
           static_cast<std::size_t>(channels);
  }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

// Throws std::invalid_argument when any dimension is < 1.
void check_shape(const Shape& s, const char* what);

/// Dense rank-3 array of doubles, row-major (h, w, c).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-initialized
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  int channels() const { return shape_.channels; }
  std::size_t size() const { return values_.size(); }

  std::size_t index(int h, int w, int c) const {
    return (static_cast<std::size_t>(h) * shape_.width + w) * shape_.channels + c;
  }
  double at(int h, int w, int c = 0) const { return values_[index(h, w, c)]; }
  double& at(int h, int w, int c = 0) { return values_[index(h, w, c)]; }

  std::span<const double> values() const { return values_; }
  std::span<double> values() { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

Tensor tensor_filled(int height, int width, int channels, double value);

/// Uniform values in [-scale, scale] from std::mt19937_64 seeded with `seed`.
/// Each value consumes one 64-bit draw u and maps it through
/// scale * (2 * (u >> 11) * 2^-53 - 1), so the stream is bit-identical on
/// every conforming platform.
Tensor tensor_random(int height, int width, int channels, std::uint64_t seed, double scale);

/// Fills `out` with the same stream tensor_random would produce.
void fill_uniform(std::span<double> out, std::uint64_t seed, double scale);

/// out[h][w][0] = sum_c t[h][w][c]
Tensor tensor_reduce_channels_sum(const Tensor& t);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator*(double k, const Tensor& a);

/// Relative difference used by gradient checks:
/// ||a - b||_2 / max(||a||_2 + ||b||_2, floor).
double relative_error(std::span<const double> a, std::span<const double> b, double floor = 1e-12);

// Raw dump: three little-endian int32 (height, width, channels) followed by
// height*width*channels little-endian float64 values in (h, w, c) order.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

/// SplitMix64 finalizer; used to derive per-layer and per-image seeds.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index);

}  // namespace afov
