#pragma once

#include <cstdint>
#include <vector>

#include "atrousfov/tensor.hpp"

namespace afov {

/// Convolution weights laid out as [kh][kw][in_channels][out_channels].
struct Kernel {
  int kh = 1;
  int kw = 1;
  int in_channels = 1;
  int out_channels = 1;
  std::vector<double> weights;
  std::vector<double> bias;  // one per output channel

  Kernel() = default;
  Kernel(int kh, int kw, int in_channels, int out_channels);  // zero weights and bias

  double& w(int i, int j, int c, int o) {
    return weights[((static_cast<std::size_t>(i) * kw + j) * in_channels + c) * out_channels + o];
  }
  double w(int i, int j, int c, int o) const {
    return weights[((static_cast<std::size_t>(i) * kw + j) * in_channels + c) * out_channels + o];
  }

  void validate() const;

  /// He-style uniform init: weights in [-sqrt(2/fan_in), sqrt(2/fan_in)],
  /// fan_in = kh*kw*in_channels. Bias stays zero unless bias_scale > 0.
  static Kernel random(int kh, int kw, int in_channels, int out_channels, std::uint64_t seed,
                       double bias_scale = 0.0);
};

struct ConvSpec {
  int stride = 1;
  int dilation = 1;
  int padding = 0;  // zero padding, per side

  /// Stride 1, padding = dilation * (k - 1) / 2.
  static ConvSpec same(int k, int dilation = 1);
  void validate() const;
};

Shape conv2d_output_shape(const Shape& in, const Kernel& k, const ConvSpec& spec);

// out[h][w][o] = bias[o] + sum_{i,j,c} k[i][j][c][o] *
//                x[h*stride - pad + i*dilation][w*stride - pad + j*dilation][c]
Tensor conv2d_forward(const Tensor& x, const Kernel& k, const ConvSpec& spec);
Tensor conv2d_input_grad(const Tensor& gy, const Kernel& k, const ConvSpec& spec,
                         const Shape& input_shape);

/// Winning flat input index (h*W + w)*C + c for every pooled element.
struct MaxPoolContext {
  Shape input_shape;
  Shape output_shape;
  std::vector<std::uint32_t> argmax;
};

// 2x2 window, stride 2. Ties go to the first element in scan order.
Tensor maxpool_forward(const Tensor& x, MaxPoolContext* ctx = nullptr);
Tensor maxpool_input_grad(const Tensor& gy, const MaxPoolContext& ctx);

// Half-pixel centers: src = (dst + 0.5) * in / out - 0.5, clamped to [0, in - 1].
Tensor bilinear_upsample_forward(const Tensor& x, int out_h, int out_w);
Tensor bilinear_upsample_input_grad(const Tensor& gy, const Shape& in_shape);

struct ReluContext {
  Shape shape;
  std::vector<std::uint8_t> active;  // 1 where x > 0
};

Tensor relu_forward(const Tensor& x, ReluContext* ctx = nullptr);
Tensor relu_input_grad(const Tensor& gy, const ReluContext& ctx);

Tensor global_avgpool_forward(const Tensor& x);
Tensor global_avgpool_input_grad(const Tensor& gy, const Shape& in_shape);

}  // namespace afov
