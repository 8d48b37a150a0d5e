#include "atrousfov/erf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <thread>

#include "atrousfov/image_io.hpp"

namespace afov {

PixelIndex default_center(int height, int width) {
  if (height < 1 || width < 1) throw std::invalid_argument("default_center: empty frame");
  return PixelIndex{(height - 1) / 2, width / 2};
}

double ErfMap::max() const {
  if (values.empty()) throw std::invalid_argument("ErfMap is empty");
  return *std::max_element(values.begin(), values.end());
}

Tensor ErfMap::to_tensor() const { return Tensor(Shape{height, width, 1}, values); }

ErfMap ErfMap::from_tensor(const Tensor& t, int n_accumulated) {
  if (t.channels() != 1) {
    throw std::invalid_argument("ErfMap needs a single-channel tensor, got " + to_string(t.shape()));
  }
  ErfMap m;
  m.height = t.height();
  m.width = t.width();
  m.values.assign(t.values().begin(), t.values().end());
  m.n_accumulated = n_accumulated;
  return m;
}

PixelIndex resolve_center(const NetworkGraph& net, const ErfConfig& config) {
  const Shape& s = net.output_shape();
  PixelIndex c = default_center(s.height, s.width);
  if (config.center_row >= 0) c.row = config.center_row;
  if (config.center_col >= 0) c.col = config.center_col;
  if (c.row >= s.height || c.col >= s.width) {
    throw std::invalid_argument("center (" + std::to_string(c.row) + ", " +
                                std::to_string(c.col) + ") outside " + to_string(s));
  }
  return c;
}

Tensor central_seed(int height, int width, int n_classes, PixelIndex center) {
  Tensor seed(Shape{height, width, n_classes});
  if (center.row < 0 || center.row >= height || center.col < 0 || center.col >= width) {
    throw std::invalid_argument("central_seed: center (" + std::to_string(center.row) + ", " +
                                std::to_string(center.col) + ") out of bounds");
  }
  for (int k = 0; k < n_classes; ++k) seed.at(center.row, center.col, k) = 1.0;
  return seed;
}

Tensor erf_single(const NetworkGraph& net, const Tensor& image, const ErfConfig& config) {
  const Shape& out = net.output_shape();
  const Tensor seed = central_seed(out.height, out.width, out.channels, resolve_center(net, config));
  return tensor_reduce_channels_sum(net.grad_wrt_input(image, seed));
}

namespace {

// Center-crops to the graph input size and adapts channel count
// (gray -> replicated, RGB -> mean when the graph wants one channel).
Tensor fit_image(const Tensor& img, const Shape& want, const std::string& path) {
  if (img.height() < want.height || img.width() < want.width) {
    throw std::runtime_error(path + ": image " + to_string(img.shape()) +
                             " smaller than network input " + to_string(want));
  }
  const int r0 = (img.height() - want.height) / 2;
  const int c0 = (img.width() - want.width) / 2;
  Tensor out(want);
  for (int r = 0; r < want.height; ++r) {
    for (int c = 0; c < want.width; ++c) {
      for (int k = 0; k < want.channels; ++k) {
        double v;
        if (img.channels() == want.channels) {
          v = img.at(r0 + r, c0 + c, k);
        } else if (img.channels() == 1) {
          v = img.at(r0 + r, c0 + c, 0);
        } else if (want.channels == 1) {
          v = 0.0;
          for (int j = 0; j < img.channels(); ++j) v += img.at(r0 + r, c0 + c, j);
          v /= img.channels();
        } else {
          throw std::runtime_error(path + ": cannot map " + std::to_string(img.channels()) +
                                   " channels to " + std::to_string(want.channels));
        }
        out.at(r, c, k) = v;
      }
    }
  }
  return out;
}

Tensor make_image(const Shape& in, const ErfConfig& config, const std::vector<std::string>& files,
                  int index) {
  if (files.empty()) {
    return tensor_random(in.height, in.width, in.channels,
                         mix_seed(config.image_seed, static_cast<std::uint64_t>(index)),
                         config.noise_scale);
  }
  if (index < 0 || index >= static_cast<int>(files.size())) {
    throw std::out_of_range("image index " + std::to_string(index) + " beyond directory");
  }
  const std::string& path = files[static_cast<std::size_t>(index)];
  return fit_image(read_image(path), in, path);
}

}  // namespace

Tensor erf_image(const NetworkGraph& net, const ErfConfig& config, int index) {
  std::vector<std::string> files;
  if (!config.image_dir.empty()) files = list_images(config.image_dir);
  return make_image(net.input_shape(), config, files, index);
}

ErfMap erf_accumulate(const NetworkGraph& net, const ErfConfig& config) {
  if (config.n_images < 1) throw std::invalid_argument("erf_accumulate: n_images must be >= 1");
  const Shape& in = net.input_shape();
  resolve_center(net, config);  // validates the center before any work

  std::vector<std::string> files;
  int count = config.n_images;
  if (!config.image_dir.empty()) {
    files = list_images(config.image_dir);
    const int available = static_cast<int>(files.size()) - config.first_image;
    if (available <= 0) {
      throw std::runtime_error("no PNG/PGM images in " + config.image_dir);
    }
    count = std::min(count, available);
  }
  auto load = [&](int i) { return make_image(in, config, files, config.first_image + i); };

  int workers = config.threads > 0 ? config.threads
                                   : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  workers = std::min(workers, count);

  ErfMap erf;
  erf.height = in.height;
  erf.width = in.width;
  erf.values.assign(static_cast<std::size_t>(in.height) * in.width, 0.0);

  // Gradients of one batch run concurrently; the reduction always walks
  // images in ascending order so results do not depend on `workers`.
  std::vector<Tensor> batch(static_cast<std::size_t>(workers));
  for (int start = 0; start < count; start += workers) {
    const int n = std::min(workers, count - start);
    if (n == 1) {
      batch[0] = erf_single(net, load(start), config);
    } else {
      std::vector<std::thread> pool;
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
      for (int w = 0; w < n; ++w) {
        pool.emplace_back([&, w] {
          try {
            batch[static_cast<std::size_t>(w)] = erf_single(net, load(start + w), config);
          } catch (...) {
            errors[static_cast<std::size_t>(w)] = std::current_exception();
          }
        });
      }
      for (auto& t : pool) t.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }
    for (int w = 0; w < n; ++w) {
      const auto g = batch[static_cast<std::size_t>(w)].values();
      for (std::size_t p = 0; p < g.size(); ++p) {
        if (g[p] > 0.0) erf.values[p] += g[p];
      }
    }
  }
  erf.n_accumulated = count;
  return erf;
}

std::vector<std::uint8_t> quantize_heatmap(const ErfMap& erf, double gamma) {
  if (erf.values.empty()) throw std::invalid_argument("render_heatmap: empty map");
  if (!(gamma > 0.0)) throw std::invalid_argument("render_heatmap: gamma must be positive");
  const double peak = erf.max();
  std::vector<std::uint8_t> out(erf.values.size(), 0);
  if (!(peak > 0.0)) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = std::clamp(erf.values[i] / peak, 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * std::pow(v, gamma)));
  }
  return out;
}

HeatmapFiles render_heatmap(const ErfMap& erf, double gamma, const std::string& png_path,
                            const std::string& pgm_path) {
  const auto gray = quantize_heatmap(erf, gamma);
  Image8 g{erf.height, erf.width, 1, gray};
  Image8 rgb{erf.height, erf.width, 3, {}};
  rgb.pixels.resize(gray.size() * 3);
  const double peak = erf.max();
  for (std::size_t i = 0; i < gray.size(); ++i) {
    double v = peak > 0.0 ? std::clamp(erf.values[i] / peak, 0.0, 1.0) : 0.0;
    const auto c = viridis(std::pow(v, gamma));
    std::copy(c.begin(), c.end(), rgb.pixels.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  if (!png_path.empty()) write_png(png_path, rgb);
  if (!pgm_path.empty()) write_pgm(pgm_path, g);
  return HeatmapFiles{png_path, pgm_path};
}

}  // namespace afov
