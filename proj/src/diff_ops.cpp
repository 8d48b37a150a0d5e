#include "atrousfov/diff_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace afov {

Kernel::Kernel(int kh_, int kw_, int in_ch, int out_ch)
    : kh(kh_), kw(kw_), in_channels(in_ch), out_channels(out_ch) {
  if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0) {
    throw std::invalid_argument("Kernel: extents must be positive and odd");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("Kernel: channel counts must be >= 1");
  }
  weights.assign(static_cast<std::size_t>(kh) * kw * in_channels * out_channels, 0.0);
  bias.assign(static_cast<std::size_t>(out_channels), 0.0);
}

void Kernel::validate() const {
  if (kh < 1 || kw < 1 || kh % 2 == 0 || kw % 2 == 0) {
    throw std::invalid_argument("Kernel: extents must be positive and odd");
  }
  if (in_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("Kernel: channel counts must be >= 1");
  }
  if (weights.size() != static_cast<std::size_t>(kh) * kw * in_channels * out_channels) {
    throw std::invalid_argument("Kernel: weights length does not match extents");
  }
  if (bias.size() != static_cast<std::size_t>(out_channels)) {
    throw std::invalid_argument("Kernel: bias length does not match out_channels");
  }
}

Kernel Kernel::random(int kh, int kw, int in_channels, int out_channels, std::uint64_t seed,
                      double bias_scale) {
  Kernel k(kh, kw, in_channels, out_channels);
  const double fan_in = static_cast<double>(kh) * kw * in_channels;
  fill_uniform(k.weights, seed, std::sqrt(2.0 / fan_in));
  if (bias_scale > 0.0) fill_uniform(k.bias, mix_seed(seed, 0xb1a5), bias_scale);
  return k;
}

ConvSpec ConvSpec::same(int k, int dilation) {
  if (k < 1 || k % 2 == 0) throw std::invalid_argument("ConvSpec::same: kernel must be odd");
  return ConvSpec{1, dilation, dilation * (k - 1) / 2};
}

void ConvSpec::validate() const {
  if (stride < 1 || dilation < 1 || padding < 0) {
    throw std::invalid_argument("ConvSpec: stride and dilation must be >= 1, padding >= 0");
  }
}

Shape conv2d_output_shape(const Shape& in, const Kernel& k, const ConvSpec& spec) {
  spec.validate();
  if (in.channels != k.in_channels) {
    throw std::invalid_argument("conv2d: input has " + std::to_string(in.channels) +
                                " channels, kernel expects " + std::to_string(k.in_channels));
  }
  const int oh = (in.height + 2 * spec.padding - spec.dilation * (k.kh - 1) - 1) / spec.stride + 1;
  const int ow = (in.width + 2 * spec.padding - spec.dilation * (k.kw - 1) - 1) / spec.stride + 1;
  if (in.height + 2 * spec.padding - spec.dilation * (k.kh - 1) - 1 < 0 ||
      in.width + 2 * spec.padding - spec.dilation * (k.kw - 1) - 1 < 0) {
    throw std::invalid_argument("conv2d: kernel footprint exceeds padded input");
  }
  return Shape{oh, ow, k.out_channels};
}

Tensor conv2d_forward(const Tensor& x, const Kernel& k, const ConvSpec& spec) {
  k.validate();
  const Shape in = x.shape();
  const Shape os = conv2d_output_shape(in, k, spec);
  Tensor out(os);
  const int C = in.channels;
  const int O = k.out_channels;
  const double* xs = x.data();
  double* ys = out.data();
  for (int oh = 0; oh < os.height; ++oh) {
    for (int ow = 0; ow < os.width; ++ow) {
      double* y = ys + out.index(oh, ow, 0);
      std::copy(k.bias.begin(), k.bias.end(), y);
      for (int i = 0; i < k.kh; ++i) {
        const int ih = oh * spec.stride - spec.padding + i * spec.dilation;
        if (ih < 0 || ih >= in.height) continue;
        for (int j = 0; j < k.kw; ++j) {
          const int iw = ow * spec.stride - spec.padding + j * spec.dilation;
          if (iw < 0 || iw >= in.width) continue;
          const double* xp = xs + x.index(ih, iw, 0);
          const double* wp = &k.weights[(static_cast<std::size_t>(i) * k.kw + j) * C * O];
          for (int c = 0; c < C; ++c) {
            const double xv = xp[c];
            if (xv == 0.0) continue;
            const double* wc = wp + static_cast<std::size_t>(c) * O;
            for (int o = 0; o < O; ++o) y[o] += xv * wc[o];
          }
        }
      }
    }
  }
  return out;
}

Tensor conv2d_input_grad(const Tensor& gy, const Kernel& k, const ConvSpec& spec,
                         const Shape& input_shape) {
  k.validate();
  check_shape(input_shape, "conv2d_input_grad");
  const Shape os = conv2d_output_shape(input_shape, k, spec);
  if (gy.shape() != os) {
    throw std::invalid_argument("conv2d_input_grad: gradient shape " + to_string(gy.shape()) +
                                " does not match output shape " + to_string(os));
  }
  Tensor gx(input_shape);
  const int C = input_shape.channels;
  const int O = k.out_channels;
  double* gxs = gx.data();
  const double* gys = gy.data();
  for (int oh = 0; oh < os.height; ++oh) {
    for (int ow = 0; ow < os.width; ++ow) {
      const double* g = gys + gy.index(oh, ow, 0);
      bool any = false;
      for (int o = 0; o < O; ++o) any |= (g[o] != 0.0);
      if (!any) continue;
      for (int i = 0; i < k.kh; ++i) {
        const int ih = oh * spec.stride - spec.padding + i * spec.dilation;
        if (ih < 0 || ih >= input_shape.height) continue;
        for (int j = 0; j < k.kw; ++j) {
          const int iw = ow * spec.stride - spec.padding + j * spec.dilation;
          if (iw < 0 || iw >= input_shape.width) continue;
          double* gp = gxs + gx.index(ih, iw, 0);
          const double* wp = &k.weights[(static_cast<std::size_t>(i) * k.kw + j) * C * O];
          for (int c = 0; c < C; ++c) {
            const double* wc = wp + static_cast<std::size_t>(c) * O;
            double acc = 0.0;
            for (int o = 0; o < O; ++o) acc += g[o] * wc[o];
            gp[c] += acc;
          }
        }
      }
    }
  }
  return gx;
}

Tensor maxpool_forward(const Tensor& x, MaxPoolContext* ctx) {
  const Shape in = x.shape();
  if (in.height % 2 != 0 || in.width % 2 != 0) {
    throw std::invalid_argument("maxpool: spatial dims must be even, got " + to_string(in));
  }
  const Shape os{in.height / 2, in.width / 2, in.channels};
  Tensor out(os);
  if (ctx) {
    ctx->input_shape = in;
    ctx->output_shape = os;
    ctx->argmax.assign(os.size(), 0);
  }
  const double* xs = x.data();
  for (int oh = 0; oh < os.height; ++oh) {
    for (int ow = 0; ow < os.width; ++ow) {
      for (int c = 0; c < os.channels; ++c) {
        std::size_t best = x.index(2 * oh, 2 * ow, c);
        for (int dh = 0; dh < 2; ++dh) {
          for (int dw = 0; dw < 2; ++dw) {
            const std::size_t idx = x.index(2 * oh + dh, 2 * ow + dw, c);
            if (xs[idx] > xs[best]) best = idx;
          }
        }
        const std::size_t o = out.index(oh, ow, c);
        out.data()[o] = xs[best];
        if (ctx) ctx->argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return out;
}

Tensor maxpool_input_grad(const Tensor& gy, const MaxPoolContext& ctx) {
  if (gy.shape() != ctx.output_shape || ctx.argmax.size() != gy.size()) {
    throw std::invalid_argument("maxpool_input_grad: gradient shape " + to_string(gy.shape()) +
                                " does not match pooled shape " + to_string(ctx.output_shape));
  }
  Tensor gx(ctx.input_shape);
  const double* g = gy.data();
  for (std::size_t i = 0; i < gy.size(); ++i) gx.data()[ctx.argmax[i]] += g[i];
  return gx;
}

namespace {

struct Interp {
  int lo;
  int hi;
  double frac;  // weight of hi
};

std::vector<Interp> interp_axis(int in, int out) {
  std::vector<Interp> axis(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int d = 0; d < out; ++d) {
    double src = (d + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int lo = static_cast<int>(std::floor(src));
    const int hi = std::min(lo + 1, in - 1);
    axis[static_cast<std::size_t>(d)] = Interp{lo, hi, src - lo};
  }
  return axis;
}

}  // namespace

Tensor bilinear_upsample_forward(const Tensor& x, int out_h, int out_w) {
  const Shape in = x.shape();
  if (out_h < in.height || out_w < in.width) {
    throw std::invalid_argument("bilinear_upsample: target " + std::to_string(out_h) + "x" +
                                std::to_string(out_w) + " smaller than input " + to_string(in));
  }
  const auto ay = interp_axis(in.height, out_h);
  const auto ax = interp_axis(in.width, out_w);
  Tensor out(Shape{out_h, out_w, in.channels});
  const int C = in.channels;
  for (int h = 0; h < out_h; ++h) {
    const Interp& iy = ay[static_cast<std::size_t>(h)];
    for (int w = 0; w < out_w; ++w) {
      const Interp& ix = ax[static_cast<std::size_t>(w)];
      const double w00 = (1 - iy.frac) * (1 - ix.frac), w01 = (1 - iy.frac) * ix.frac;
      const double w10 = iy.frac * (1 - ix.frac), w11 = iy.frac * ix.frac;
      const double* p00 = x.data() + x.index(iy.lo, ix.lo, 0);
      const double* p01 = x.data() + x.index(iy.lo, ix.hi, 0);
      const double* p10 = x.data() + x.index(iy.hi, ix.lo, 0);
      const double* p11 = x.data() + x.index(iy.hi, ix.hi, 0);
      double* y = out.data() + out.index(h, w, 0);
      for (int c = 0; c < C; ++c) {
        y[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
      }
    }
  }
  return out;
}

Tensor bilinear_upsample_input_grad(const Tensor& gy, const Shape& in_shape) {
  check_shape(in_shape, "bilinear_upsample_input_grad");
  const Shape os = gy.shape();
  if (os.channels != in_shape.channels || os.height < in_shape.height ||
      os.width < in_shape.width) {
    throw std::invalid_argument("bilinear_upsample_input_grad: gradient shape " + to_string(os) +
                                " incompatible with input shape " + to_string(in_shape));
  }
  const auto ay = interp_axis(in_shape.height, os.height);
  const auto ax = interp_axis(in_shape.width, os.width);
  Tensor gx(in_shape);
  const int C = in_shape.channels;
  for (int h = 0; h < os.height; ++h) {
    const Interp& iy = ay[static_cast<std::size_t>(h)];
    for (int w = 0; w < os.width; ++w) {
      const Interp& ix = ax[static_cast<std::size_t>(w)];
      const double w00 = (1 - iy.frac) * (1 - ix.frac), w01 = (1 - iy.frac) * ix.frac;
      const double w10 = iy.frac * (1 - ix.frac), w11 = iy.frac * ix.frac;
      const double* g = gy.data() + gy.index(h, w, 0);
      double* p00 = gx.data() + gx.index(iy.lo, ix.lo, 0);
      double* p01 = gx.data() + gx.index(iy.lo, ix.hi, 0);
      double* p10 = gx.data() + gx.index(iy.hi, ix.lo, 0);
      double* p11 = gx.data() + gx.index(iy.hi, ix.hi, 0);
      for (int c = 0; c < C; ++c) {
        p00[c] += w00 * g[c];
        p01[c] += w01 * g[c];
        p10[c] += w10 * g[c];
        p11[c] += w11 * g[c];
      }
    }
  }
  return gx;
}

Tensor relu_forward(const Tensor& x, ReluContext* ctx) {
  Tensor out = x;
  if (ctx) {
    ctx->shape = x.shape();
    ctx->active.assign(x.size(), 0);
  }
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i] > 0.0) {
      if (ctx) ctx->active[i] = 1;
    } else {
      v[i] = 0.0;
    }
  }
  return out;
}

Tensor relu_input_grad(const Tensor& gy, const ReluContext& ctx) {
  if (gy.shape() != ctx.shape || ctx.active.size() != gy.size()) {
    throw std::invalid_argument("relu_input_grad: gradient shape " + to_string(gy.shape()) +
                                " does not match " + to_string(ctx.shape));
  }
  Tensor gx = gy;
  auto v = gx.values();
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!ctx.active[i]) v[i] = 0.0;
  }
  return gx;
}

Tensor global_avgpool_forward(const Tensor& x) {
  const Shape in = x.shape();
  Tensor out(Shape{1, 1, in.channels});
  const std::size_t pixels = static_cast<std::size_t>(in.height) * in.width;
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < in.channels; ++c) out.data()[c] += x.data()[p * in.channels + c];
  }
  for (double& v : out.values()) v /= static_cast<double>(pixels);
  return out;
}

Tensor global_avgpool_input_grad(const Tensor& gy, const Shape& in_shape) {
  check_shape(in_shape, "global_avgpool_input_grad");
  if (gy.shape() != Shape{1, 1, in_shape.channels}) {
    throw std::invalid_argument("global_avgpool_input_grad: gradient shape " +
                                to_string(gy.shape()) + " does not match 1x1x" +
                                std::to_string(in_shape.channels));
  }
  Tensor gx(in_shape);
  const std::size_t pixels = static_cast<std::size_t>(in_shape.height) * in_shape.width;
  const double inv = 1.0 / static_cast<double>(pixels);
  for (std::size_t p = 0; p < pixels; ++p) {
    for (int c = 0; c < in_shape.channels; ++c) {
      gx.data()[p * in_shape.channels + c] = gy.data()[c] * inv;
    }
  }
  return gx;
}

}  // namespace afov
