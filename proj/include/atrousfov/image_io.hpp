#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "atrousfov/tensor.hpp"

namespace afov {

/// 8-bit raster, interleaved, `channels` in {1, 3}.
struct Image8 {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;
};

void write_png(const std::string& path, const Image8& img);
void write_pgm(const std::string& path, const Image8& img);  // channels must be 1

Image8 read_pgm(const std::string& path);  // binary P5, maxval <= 255
Image8 read_png(const std::string& path);  // 8-bit; alpha dropped, palette expanded

/// Reads a .png or .pgm file as reals in [0, 1] with 1 or 3 channels.
Tensor read_image(const std::string& path);

/// Sorted list of *.png / *.pgm files directly inside `dir`.
std::vector<std::string> list_images(const std::string& dir);

/// Viridis sampled at 11 evenly spaced anchors, linearly interpolated.
std::array<std::uint8_t, 3> viridis(double t);

}  // namespace afov
