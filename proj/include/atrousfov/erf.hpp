#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "atrousfov/net_graph.hpp"
#include "atrousfov/tensor.hpp"

namespace afov {

struct PixelIndex {
  int row = 0;
  int col = 0;
  bool operator==(const PixelIndex&) const = default;
};

/// (floor((H - 1) / 2), floor(W / 2)); (383, 384) for a 768x768 image.
PixelIndex default_center(int height, int width);

struct ErfConfig {
  // Negative entries select default_center().
  int center_row = -1;
  int center_col = -1;
  int n_images = 16;
  // Index of the first image; the i-th synthetic image is
  // tensor_random(H, W, C, mix_seed(image_seed, first_image + i), noise_scale).
  int first_image = 0;
  std::uint64_t image_seed = 0;
  double noise_scale = 1.0;
  // When non-empty, images are read from this directory (sorted by name)
  // instead of being synthesized.
  std::string image_dir;
  // Worker threads for per-image gradients; 0 selects hardware concurrency.
  int threads = 0;
};

/// Accumulated effective receptive field, R = sum_I ReLU(G_I).
struct ErfMap {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  int n_accumulated = 0;

  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  double max() const;
  Tensor to_tensor() const;
  static ErfMap from_tensor(const Tensor& t, int n_accumulated = 0);
};

PixelIndex resolve_center(const NetworkGraph& net, const ErfConfig& config);

/// One at (center, k) for every class k, zero elsewhere.
Tensor central_seed(int height, int width, int n_classes, PixelIndex center);

/// G = sum_c d(sum_k y[center, k]) / dI, before ReLU.
Tensor erf_single(const NetworkGraph& net, const Tensor& image, const ErfConfig& config);

/// Image number `index` of the configured dataset, shaped to the graph input.
Tensor erf_image(const NetworkGraph& net, const ErfConfig& config, int index);

ErfMap erf_accumulate(const NetworkGraph& net, const ErfConfig& config);

struct HeatmapFiles {
  std::string png;
  std::string pgm;
};

/// Normalizes by the map maximum, applies v^gamma, then writes a viridis PNG
/// and an 8-bit PGM holding round(255 * (v / max)^gamma). A map whose maximum
/// is not positive renders as all zeros.
HeatmapFiles render_heatmap(const ErfMap& erf, double gamma, const std::string& png_path,
                            const std::string& pgm_path);

/// Gray levels written by render_heatmap, row-major.
std::vector<std::uint8_t> quantize_heatmap(const ErfMap& erf, double gamma);

}  // namespace afov
