#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "atrousfov/diff_ops.hpp"
#include "atrousfov/tensor.hpp"

namespace afov {

class GraphBuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class LayerKind { input, conv, relu, maxpool, bilinear_resize, global_avgpool, concat, add };

const char* to_string(LayerKind kind);

struct LayerNode {
  LayerKind kind = LayerKind::input;
  std::vector<int> inputs;
  Kernel kernel;  // conv
  ConvSpec spec;  // conv
  // bilinear_resize: either an explicit target size or the spatial size of
  // node `size_ref`.
  int resize_h = 0;
  int resize_w = 0;
  int size_ref = -1;
  std::string label;
};

/// A partial graph whose node indices are local; kInput refers to whatever
/// feeds the fragment once it is assembled.
class Fragment {
 public:
  static constexpr int kInput = -1;

  static Fragment identity() { return Fragment{}; }

  int add(LayerNode node);
  int conv(int input, Kernel kernel, ConvSpec spec, std::string label = {});
  int relu(int input);
  int maxpool(int input);
  int global_avgpool(int input);
  int resize_like(int input, int ref);
  int resize_to(int input, int h, int w);
  int concat(std::vector<int> inputs);
  int add_nodes(int a, int b);

  const std::vector<LayerNode>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }
  int output() const { return output_; }
  void set_output(int id);
  /// Output channels of the fragment, or 0 when it passes channels through.
  int out_channels() const { return out_channels_; }
  void set_out_channels(int c) { out_channels_ = c; }

 private:
  std::vector<LayerNode> nodes_;
  int output_ = kInput;
  int out_channels_ = 0;
};

/// log2(stride) stages of [3x3 same conv -> ReLU -> 2x2 maxpool]. An empty
/// `channels` selects widths 8, 16, 32, ... per stage.
Fragment build_encoder(int stride, std::vector<int> channels, std::uint64_t seed,
                       int in_channels = 3, double bias_scale = 0.0);

struct AsppSpec {
  int base_rate = 6;
  int branch_channels = 32;
  int in_channels = 64;
  bool image_pool = true;
  bool relu = true;
  bool bias = false;
};

/// 1x1 branch, optional image-pooling branch, and 3x3 branches at dilations
/// {r, 2r, 3r}; concatenated and merged by one 1x1 conv to n_classes.
Fragment build_aspp_head(const AsppSpec& spec, int n_classes, std::uint64_t seed);

struct FcnD6Spec {
  int rate = 6;
  int in_channels = 64;
  int channels = 32;
  bool relu = true;
  bool bias = false;
};

/// Two sequential 3x3 dilation-r convs (ReLU between), then 1x1 to n_classes.
Fragment build_fcn_d6_head(const FcnD6Spec& spec, int n_classes, std::uint64_t seed);

class NetworkGraph {
 public:
  const std::vector<LayerNode>& nodes() const { return nodes_; }
  const std::vector<Shape>& shapes() const { return shapes_; }
  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  int n_classes() const { return output_shape().channels; }
  int output_stride() const { return output_stride_; }
  /// Node index of the encoder output (0 when the encoder is empty).
  int encoder_output() const { return encoder_output_; }
  /// Shape of the feature map entering the head.
  const Shape& feature_shape() const { return shapes_[static_cast<std::size_t>(encoder_output_)]; }

  Tensor forward(const Tensor& image) const;

  /// d(sum(seed * forward(image))) / d(image).
  Tensor grad_wrt_input(const Tensor& image, const Tensor& seed) const;

  /// ReLU masks and max-pool winners of a forward pass, flattened. Two inputs
  /// with equal patterns lie in the same linear region of the network.
  std::vector<std::uint32_t> activation_pattern(const Tensor& image) const;

 private:
  friend NetworkGraph assemble(const Fragment&, const Fragment&, int, int, int);

  struct Trace;
  void run_forward(const Tensor& image, Trace& trace, bool keep_contexts) const;

  std::vector<LayerNode> nodes_;
  std::vector<Shape> shapes_;
  int encoder_output_ = 0;
  int output_stride_ = 1;
};

/// input -> encoder -> head -> bilinear resize to (input_h, input_w).
/// Throws GraphBuildError on any shape conflict.
NetworkGraph assemble(const Fragment& encoder, const Fragment& head, int input_h, int input_w,
                      int input_channels = 3);

/// Product of spatial reduction factors from the input to the head input.
/// Throws GraphBuildError when branches disagree on their stride.
int infer_output_stride(const NetworkGraph& net);

}  // namespace afov
