#include "atrousfov/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "atrousfov/fileio.hpp"

namespace afov {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

std::string lower_ext(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

}  // namespace

void write_png(const std::string& path, const Image8& img) {
  if (img.channels != 1 && img.channels != 3) throw std::invalid_argument("write_png: 1 or 3 channels");
  const std::string tmp = path + ".tmp";
  {
    FilePtr fp(std::fopen(tmp.c_str(), "wb"));
    if (!fp) throw std::runtime_error("cannot open for writing: " + tmp);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
      png_destroy_write_struct(&png, &info);
      throw std::runtime_error("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
      png_destroy_write_struct(&png, &info);
      throw std::runtime_error("libpng write failed: " + tmp);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8,
                 img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int r = 0; r < img.height; ++r) {
      png_write_row(png, const_cast<png_bytep>(img.pixels.data() + r * stride));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
  }
  std::filesystem::rename(tmp, path);
}

void write_pgm(const std::string& path, const Image8& img) {
  if (img.channels != 1) throw std::invalid_argument("write_pgm: single channel only");
  std::string bytes = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                      "\n255\n";
  bytes.append(reinterpret_cast<const char*>(img.pixels.data()), img.pixels.size());
  atomic_write(path, bytes);
}

Image8 read_pgm(const std::string& path) {
  const std::string data = read_file(path);
  std::size_t pos = 0;
  auto next_token = [&]() {
    while (pos < data.size()) {
      if (data[pos] == '#') {
        while (pos < data.size() && data[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(data[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < data.size() && !std::isspace(static_cast<unsigned char>(data[pos]))) ++pos;
    return data.substr(start, pos - start);
  };
  if (next_token() != "P5") throw std::runtime_error(path + ": not a binary PGM (P5)");
  Image8 img;
  try {
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (maxval < 1 || maxval > 255) throw std::runtime_error("maxval");
  } catch (const std::exception&) {
    throw std::runtime_error(path + ": malformed PGM header");
  }
  ++pos;  // single whitespace before raster
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height;
  if (img.width < 1 || img.height < 1 || data.size() < pos + n) {
    throw std::runtime_error(path + ": truncated PGM raster");
  }
  img.channels = 1;
  img.pixels.assign(data.begin() + static_cast<std::ptrdiff_t>(pos),
                    data.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

Image8 read_png(const std::string& path) {
  FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng init failed");
  }
  Image8 img;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("libpng read failed: " + path);
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color = png_get_color_type(png, info);
  if (bit_depth == 16) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path + ": only 8-bit PNG is supported");
  }
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  png_set_strip_16(png);
  png_read_update_info(png, info);
  img.width = static_cast<int>(png_get_image_width(png, info));
  img.height = static_cast<int>(png_get_image_height(png, info));
  img.channels = png_get_channels(png, info);
  img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * img.channels);
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int r = 0; r < img.height; ++r) {
    rows[static_cast<std::size_t>(r)] =
        img.pixels.data() + static_cast<std::size_t>(r) * img.width * img.channels;
  }
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

Tensor read_image(const std::string& path) {
  const std::string ext = lower_ext(path);
  Image8 img;
  if (ext == ".png") {
    img = read_png(path);
  } else if (ext == ".pgm") {
    img = read_pgm(path);
  } else {
    throw std::runtime_error(path + ": unsupported image type");
  }
  Tensor t(Shape{img.height, img.width, img.channels});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t.data()[i] = img.pixels[i] / 255.0;
  return t;
}

std::vector<std::string> list_images(const std::string& dir) {
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string ext = lower_ext(entry.path().string());
    if (ext == ".png" || ext == ".pgm") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::array<std::uint8_t, 3> viridis(double t) {
  static constexpr std::uint8_t kAnchors[11][3] = {
      {68, 1, 84},    {72, 36, 117},  {65, 68, 135},  {53, 95, 141},
      {42, 120, 142}, {33, 145, 140}, {34, 168, 132}, {68, 191, 112},
      {122, 209, 81}, {189, 223, 38}, {253, 231, 37}};
  if (!(t >= 0.0)) t = 0.0;
  if (t > 1.0) t = 1.0;
  const double x = t * 10.0;
  const int i = std::min(static_cast<int>(x), 9);
  const double f = x - i;
  std::array<std::uint8_t, 3> rgb{};
  for (int c = 0; c < 3; ++c) {
    const double v = kAnchors[i][c] + f * (kAnchors[i + 1][c] - kAnchors[i][c]);
    rgb[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(v));
  }
  return rgb;
}

}  // namespace afov
