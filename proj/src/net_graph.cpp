#include "atrousfov/net_graph.hpp"

#include <optional>

namespace afov {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::relu: return "relu";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::bilinear_resize: return "bilinear_resize";
    case LayerKind::global_avgpool: return "global_avgpool";
    case LayerKind::concat: return "concat";
    case LayerKind::add: return "add";
  }
  return "?";
}

// --- Fragment ---------------------------------------------------------------

int Fragment::add(LayerNode node) {
  const int id = static_cast<int>(nodes_.size());
  for (int in : node.inputs) {
    if (in < kInput || in >= id) {
      throw GraphBuildError("fragment node " + std::to_string(id) +
                            " references unknown predecessor " + std::to_string(in));
    }
  }
  if (node.kind == LayerKind::bilinear_resize && node.size_ref >= id) {
    throw GraphBuildError("resize references a later node");
  }
  nodes_.push_back(std::move(node));
  output_ = id;
  return id;
}

int Fragment::conv(int input, Kernel kernel, ConvSpec spec, std::string label) {
  kernel.validate();
  spec.validate();
  LayerNode n;
  n.kind = LayerKind::conv;
  n.inputs = {input};
  n.kernel = std::move(kernel);
  n.spec = spec;
  n.label = std::move(label);
  return add(std::move(n));
}

namespace {
LayerNode unary(LayerKind kind, int input) {
  LayerNode n;
  n.kind = kind;
  n.inputs = {input};
  return n;
}
}  // namespace

int Fragment::relu(int input) { return add(unary(LayerKind::relu, input)); }
int Fragment::maxpool(int input) { return add(unary(LayerKind::maxpool, input)); }
int Fragment::global_avgpool(int input) { return add(unary(LayerKind::global_avgpool, input)); }

int Fragment::resize_like(int input, int ref) {
  LayerNode n = unary(LayerKind::bilinear_resize, input);
  n.size_ref = ref;
  return add(std::move(n));
}

int Fragment::resize_to(int input, int h, int w) {
  if (h < 1 || w < 1) throw GraphBuildError("resize target must be positive");
  LayerNode n = unary(LayerKind::bilinear_resize, input);
  n.resize_h = h;
  n.resize_w = w;
  return add(std::move(n));
}

int Fragment::concat(std::vector<int> inputs) {
  if (inputs.empty()) throw GraphBuildError("concat needs at least one input");
  LayerNode n;
  n.kind = LayerKind::concat;
  n.inputs = std::move(inputs);
  return add(std::move(n));
}

int Fragment::add_nodes(int a, int b) {
  LayerNode n;
  n.kind = LayerKind::add;
  n.inputs = {a, b};
  return add(std::move(n));
}

void Fragment::set_output(int id) {
  if (id < kInput || id >= static_cast<int>(nodes_.size())) {
    throw GraphBuildError("fragment output out of range");
  }
  output_ = id;
}

// --- builders ----------------------------------------------------------------

Fragment build_encoder(int stride, std::vector<int> channels, std::uint64_t seed, int in_channels,
                       double bias_scale) {
  if (stride < 1 || (stride & (stride - 1)) != 0 || stride > 32) {
    throw std::invalid_argument("encoder stride must be one of 1, 2, 4, 8, 16, 32; got " +
                                std::to_string(stride));
  }
  int stages = 0;
  while ((1 << stages) < stride) ++stages;
  if (channels.empty()) {
    for (int i = 0; i < stages; ++i) channels.push_back(8 << i);
  }
  if (static_cast<int>(channels.size()) != stages) {
    throw std::invalid_argument("encoder stride " + std::to_string(stride) + " needs " +
                                std::to_string(stages) + " channel widths, got " +
                                std::to_string(channels.size()));
  }
  Fragment f;
  int cur = Fragment::kInput;
  int cin = in_channels;
  for (int i = 0; i < stages; ++i) {
    cur = f.conv(cur, Kernel::random(3, 3, cin, channels[i], mix_seed(seed, i), bias_scale),
                 ConvSpec::same(3), "encoder.conv" + std::to_string(i));
    cur = f.relu(cur);
    cur = f.maxpool(cur);
    cin = channels[i];
  }
  f.set_out_channels(stages > 0 ? cin : 0);
  return f;
}

Fragment build_aspp_head(const AsppSpec& spec, int n_classes, std::uint64_t seed) {
  if (spec.base_rate < 1) throw std::invalid_argument("ASPP base rate must be >= 1");
  if (spec.branch_channels < 1 || spec.in_channels < 1 || n_classes < 1) {
    throw std::invalid_argument("ASPP channel counts must be >= 1");
  }
  const double bias = spec.bias ? 0.1 : 0.0;
  const int bc = spec.branch_channels;
  Fragment f;
  std::uint64_t layer = 100;
  auto branch_act = [&](int node) { return spec.relu ? f.relu(node) : node; };

  std::vector<int> branches;
  branches.push_back(branch_act(f.conv(Fragment::kInput,
                                       Kernel::random(1, 1, spec.in_channels, bc,
                                                      mix_seed(seed, layer++), bias),
                                       ConvSpec{}, "aspp.conv1x1")));
  if (spec.image_pool) {
    int p = f.global_avgpool(Fragment::kInput);
    p = f.conv(p, Kernel::random(1, 1, spec.in_channels, bc, mix_seed(seed, layer++), bias),
               ConvSpec{}, "aspp.pool_conv");
    p = branch_act(p);
    branches.push_back(f.resize_like(p, Fragment::kInput));
  } else {
    ++layer;
  }
  for (int k = 1; k <= 3; ++k) {
    const int d = k * spec.base_rate;
    branches.push_back(branch_act(
        f.conv(Fragment::kInput,
               Kernel::random(3, 3, spec.in_channels, bc, mix_seed(seed, layer++), bias),
               ConvSpec::same(3, d), "aspp.atrous" + std::to_string(d))));
  }
  const int cat = f.concat(branches);
  const int in_merge = bc * static_cast<int>(branches.size());
  f.conv(cat, Kernel::random(1, 1, in_merge, n_classes, mix_seed(seed, layer++), bias),
         ConvSpec{}, "aspp.merge");
  f.set_out_channels(n_classes);
  return f;
}

Fragment build_fcn_d6_head(const FcnD6Spec& spec, int n_classes, std::uint64_t seed) {
  if (spec.rate < 1) throw std::invalid_argument("FCN-D6 rate must be >= 1");
  if (spec.channels < 1 || spec.in_channels < 1 || n_classes < 1) {
    throw std::invalid_argument("FCN-D6 channel counts must be >= 1");
  }
  const double bias = spec.bias ? 0.1 : 0.0;
  Fragment f;
  int cur = f.conv(Fragment::kInput,
                   Kernel::random(3, 3, spec.in_channels, spec.channels, mix_seed(seed, 200), bias),
                   ConvSpec::same(3, spec.rate), "fcn_d6.conv_a");
  if (spec.relu) cur = f.relu(cur);
  cur = f.conv(cur,
               Kernel::random(3, 3, spec.channels, spec.channels, mix_seed(seed, 201), bias),
               ConvSpec::same(3, spec.rate), "fcn_d6.conv_b");
  if (spec.relu) cur = f.relu(cur);
  f.conv(cur, Kernel::random(1, 1, spec.channels, n_classes, mix_seed(seed, 202), bias),
         ConvSpec{}, "fcn_d6.classifier");
  f.set_out_channels(n_classes);
  return f;
}

// --- assembly ----------------------------------------------------------------

namespace {

Shape infer_shape(const LayerNode& n, const std::vector<Shape>& shapes) {
  auto in = [&](std::size_t i) { return shapes[static_cast<std::size_t>(n.inputs[i])]; };
  switch (n.kind) {
    case LayerKind::input:
      throw GraphBuildError("input node inside graph body");
    case LayerKind::conv:
      return conv2d_output_shape(in(0), n.kernel, n.spec);
    case LayerKind::relu:
      return in(0);
    case LayerKind::maxpool: {
      const Shape s = in(0);
      if (s.height % 2 != 0 || s.width % 2 != 0) {
        throw GraphBuildError("maxpool input " + to_string(s) + " has odd spatial size");
      }
      return Shape{s.height / 2, s.width / 2, s.channels};
    }
    case LayerKind::global_avgpool:
      return Shape{1, 1, in(0).channels};
    case LayerKind::bilinear_resize: {
      const Shape s = in(0);
      Shape t{n.resize_h, n.resize_w, s.channels};
      if (n.size_ref >= 0) {
        const Shape& r = shapes[static_cast<std::size_t>(n.size_ref)];
        t.height = r.height;
        t.width = r.width;
      }
      if (t.height < s.height || t.width < s.width) {
        throw GraphBuildError("resize from " + to_string(s) + " to " + to_string(t) +
                              " would shrink");
      }
      return t;
    }
    case LayerKind::concat: {
      Shape s = in(0);
      s.channels = 0;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        if (in(i).height != s.height || in(i).width != s.width) {
          throw GraphBuildError("concat inputs disagree on spatial size: " + to_string(in(0)) +
                                " vs " + to_string(in(i)));
        }
        s.channels += in(i).channels;
      }
      return s;
    }
    case LayerKind::add:
      if (in(0) != in(1)) {
        throw GraphBuildError("add inputs disagree: " + to_string(in(0)) + " vs " +
                              to_string(in(1)));
      }
      return in(0);
  }
  throw GraphBuildError("unknown layer kind");
}

void append_fragment(const Fragment& frag, int feed, std::vector<LayerNode>& nodes) {
  const int base = static_cast<int>(nodes.size());
  auto map = [&](int local) { return local == Fragment::kInput ? feed : base + local; };
  for (LayerNode n : frag.nodes()) {
    for (int& in : n.inputs) in = map(in);
    if (n.kind == LayerKind::bilinear_resize && (n.size_ref != -1 || n.resize_h == 0)) {
      n.size_ref = map(n.size_ref);
    }
    nodes.push_back(std::move(n));
  }
}

int fragment_output(const Fragment& frag, int feed, int base) {
  return frag.output() == Fragment::kInput ? feed : base + frag.output();
}

}  // namespace

NetworkGraph assemble(const Fragment& encoder, const Fragment& head, int input_h, int input_w,
                      int input_channels) {
  if (input_h < 1 || input_w < 1 || input_channels < 1) {
    throw GraphBuildError("input dimensions must be >= 1");
  }
  NetworkGraph g;
  LayerNode input;
  input.label = "input";
  g.nodes_.push_back(input);

  append_fragment(encoder, 0, g.nodes_);
  g.encoder_output_ = fragment_output(encoder, 0, 1);
  const int head_base = static_cast<int>(g.nodes_.size());
  append_fragment(head, g.encoder_output_, g.nodes_);
  const int head_out = fragment_output(head, g.encoder_output_, head_base);

  LayerNode resize;
  resize.kind = LayerKind::bilinear_resize;
  resize.inputs = {head_out};
  resize.resize_h = input_h;
  resize.resize_w = input_w;
  resize.label = "output.resize";
  g.nodes_.push_back(resize);

  g.shapes_.push_back(Shape{input_h, input_w, input_channels});
  for (std::size_t i = 1; i < g.nodes_.size(); ++i) {
    try {
      g.shapes_.push_back(infer_shape(g.nodes_[i], g.shapes_));
    } catch (const GraphBuildError&) {
      throw;
    } catch (const std::exception& e) {
      const LayerNode& n = g.nodes_[i];
      throw GraphBuildError("node " + std::to_string(i) + " (" + to_string(n.kind) +
                            (n.label.empty() ? "" : " " + n.label) + "): " + e.what());
    }
  }
  g.output_stride_ = infer_output_stride(g);
  return g;
}

int infer_output_stride(const NetworkGraph& net) {
  constexpr int kGlobal = 0;
  const auto& nodes = net.nodes();
  const auto& shapes = net.shapes();
  const Shape in = shapes.front();
  std::vector<int> stride(nodes.size(), 1);
  auto stride_of_shape = [&](const Shape& s, std::size_t node) {
    if (in.height % s.height != 0 || in.width % s.width != 0 ||
        in.height / s.height != in.width / s.width) {
      throw GraphBuildError("node " + std::to_string(node) + " has non-integral stride (" +
                            to_string(s) + " from " + to_string(in) + ")");
    }
    return in.height / s.height;
  };
  const std::size_t last = nodes.size() - 1;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    const LayerNode& n = nodes[i];
    const int s0 = stride[static_cast<std::size_t>(n.inputs[0])];
    switch (n.kind) {
      case LayerKind::global_avgpool:
        stride[i] = kGlobal;
        break;
      case LayerKind::bilinear_resize:
        if (i == last) {
          stride[i] = 1;
        } else if (n.size_ref >= 0) {
          stride[i] = stride[static_cast<std::size_t>(n.size_ref)];
        } else {
          stride[i] = stride_of_shape(shapes[i], i);
        }
        break;
      case LayerKind::conv:
      case LayerKind::maxpool:
        stride[i] = s0 == kGlobal ? kGlobal : stride_of_shape(shapes[i], i);
        break;
      case LayerKind::concat:
      case LayerKind::add: {
        int s = kGlobal;
        for (int p : n.inputs) {
          const int sp = stride[static_cast<std::size_t>(p)];
          if (sp == kGlobal) continue;
          if (s != kGlobal && sp != s) {
            throw GraphBuildError("node " + std::to_string(i) + " merges branches with strides " +
                                  std::to_string(s) + " and " + std::to_string(sp));
          }
          s = sp;
        }
        stride[i] = s;
        break;
      }
      default:
        stride[i] = s0;
    }
  }
  const int s = stride[static_cast<std::size_t>(net.encoder_output())];
  for (std::size_t i = static_cast<std::size_t>(net.encoder_output()) + 1; i < last; ++i) {
    if (stride[i] != kGlobal && stride[i] != s) {
      throw GraphBuildError("head node " + std::to_string(i) + " runs at stride " +
                            std::to_string(stride[i]) + ", encoder output at " +
                            std::to_string(s));
    }
  }
  return s;
}

// --- evaluation --------------------------------------------------------------

struct NetworkGraph::Trace {
  std::vector<std::optional<Tensor>> outputs;
  std::vector<ReluContext> relu;
  std::vector<MaxPoolContext> pool;
};

void NetworkGraph::run_forward(const Tensor& image, Trace& trace, bool keep_contexts) const {
  if (image.shape() != input_shape()) {
    throw std::invalid_argument("image shape " + to_string(image.shape()) +
                                " does not match graph input " + to_string(input_shape()));
  }
  const std::size_t n_nodes = nodes_.size();
  std::vector<int> consumers(n_nodes, 0);
  for (const LayerNode& n : nodes_) {
    for (int in : n.inputs) ++consumers[static_cast<std::size_t>(in)];
  }
  trace.outputs.assign(n_nodes, std::nullopt);
  if (keep_contexts) {
    trace.relu.assign(n_nodes, {});
    trace.pool.assign(n_nodes, {});
  }
  trace.outputs[0] = image;
  for (std::size_t i = 1; i < n_nodes; ++i) {
    const LayerNode& n = nodes_[i];
    auto in = [&](std::size_t k) -> const Tensor& {
      return *trace.outputs[static_cast<std::size_t>(n.inputs[k])];
    };
    Tensor out;
    switch (n.kind) {
      case LayerKind::conv:
        out = conv2d_forward(in(0), n.kernel, n.spec);
        break;
      case LayerKind::relu:
        out = relu_forward(in(0), keep_contexts ? &trace.relu[i] : nullptr);
        break;
      case LayerKind::maxpool:
        out = maxpool_forward(in(0), keep_contexts ? &trace.pool[i] : nullptr);
        break;
      case LayerKind::global_avgpool:
        out = global_avgpool_forward(in(0));
        break;
      case LayerKind::bilinear_resize:
        out = bilinear_upsample_forward(in(0), shapes_[i].height, shapes_[i].width);
        break;
      case LayerKind::concat: {
        out = Tensor(shapes_[i]);
        const std::size_t pixels = static_cast<std::size_t>(shapes_[i].height) * shapes_[i].width;
        int offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Tensor& src = in(k);
          const int c = src.channels();
          for (std::size_t p = 0; p < pixels; ++p) {
            std::copy_n(src.data() + p * c, c,
                        out.data() + p * shapes_[i].channels + offset);
          }
          offset += c;
        }
        break;
      }
      case LayerKind::add:
        out = in(0) + in(1);
        break;
      case LayerKind::input:
        throw GraphBuildError("input node inside graph body");
    }
    trace.outputs[i] = std::move(out);
    for (int p : n.inputs) {
      if (--consumers[static_cast<std::size_t>(p)] == 0) trace.outputs[static_cast<std::size_t>(p)].reset();
    }
  }
}

Tensor NetworkGraph::forward(const Tensor& image) const {
  Trace trace;
  run_forward(image, trace, false);
  return std::move(*trace.outputs.back());
}

std::vector<std::uint32_t> NetworkGraph::activation_pattern(const Tensor& image) const {
  Trace trace;
  run_forward(image, trace, true);
  std::vector<std::uint32_t> pattern;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (std::uint8_t a : trace.relu[i].active) pattern.push_back(a);
    pattern.insert(pattern.end(), trace.pool[i].argmax.begin(), trace.pool[i].argmax.end());
  }
  return pattern;
}

Tensor NetworkGraph::grad_wrt_input(const Tensor& image, const Tensor& seed) const {
  if (seed.shape() != output_shape()) {
    throw std::invalid_argument("seed shape " + to_string(seed.shape()) +
                                " does not match graph output " + to_string(output_shape()));
  }
  Trace trace;
  run_forward(image, trace, true);
  trace.outputs.clear();

  const std::size_t n_nodes = nodes_.size();
  std::vector<std::optional<Tensor>> grads(n_nodes);
  grads.back() = seed;
  auto accumulate = [&](int node, Tensor g) {
    auto& slot = grads[static_cast<std::size_t>(node)];
    if (slot) {
      auto dst = slot->values();
      auto src = g.values();
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += src[k];
    } else {
      slot = std::move(g);
    }
  };
  for (std::size_t i = n_nodes - 1; i >= 1; --i) {
    if (!grads[i]) continue;
    const Tensor g = std::move(*grads[i]);
    grads[i].reset();
    const LayerNode& n = nodes_[i];
    auto in_shape = [&](std::size_t k) { return shapes_[static_cast<std::size_t>(n.inputs[k])]; };
    switch (n.kind) {
      case LayerKind::conv:
        accumulate(n.inputs[0], conv2d_input_grad(g, n.kernel, n.spec, in_shape(0)));
        break;
      case LayerKind::relu:
        accumulate(n.inputs[0], relu_input_grad(g, trace.relu[i]));
        break;
      case LayerKind::maxpool:
        accumulate(n.inputs[0], maxpool_input_grad(g, trace.pool[i]));
        break;
      case LayerKind::global_avgpool:
        accumulate(n.inputs[0], global_avgpool_input_grad(g, in_shape(0)));
        break;
      case LayerKind::bilinear_resize:
        accumulate(n.inputs[0], bilinear_upsample_input_grad(g, in_shape(0)));
        break;
      case LayerKind::concat: {
        const std::size_t pixels = static_cast<std::size_t>(shapes_[i].height) * shapes_[i].width;
        int offset = 0;
        for (std::size_t k = 0; k < n.inputs.size(); ++k) {
          const Shape s = in_shape(k);
          Tensor part(s);
          for (std::size_t p = 0; p < pixels; ++p) {
            std::copy_n(g.data() + p * shapes_[i].channels + offset, s.channels,
                        part.data() + p * s.channels);
          }
          offset += s.channels;
          accumulate(n.inputs[k], std::move(part));
        }
        break;
      }
      case LayerKind::add:
        accumulate(n.inputs[0], g);
        accumulate(n.inputs[1], g);
        break;
      case LayerKind::input:
        break;
    }
  }
  if (!grads[0]) return Tensor(input_shape());
  return std::move(*grads[0]);
}

}  // namespace afov
