#include "rwgcn/network.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "rwgcn/errors.hpp"

namespace rwgcn {
namespace {

Tensor kaiming(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  return random_normal(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)), rng);
}

Tensor to_batch(const Tensor& x) {
  if (x.rank() == 4) return x;
  if (x.rank() == 3) return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  throw DimensionError("expected [C, T, V] or [B, C, T, V], got " + shape_to_string(x.shape()));
}

}  // namespace

GcnLayer::GcnLayer(std::size_t in_channels, std::size_t out_channels,
                   std::shared_ptr<const PartitionedAdjacency> adj, bool use_edge_importance,
                   std::mt19937_64& rng)
    : adjacency(std::move(adj)) {
  const std::size_t p = adjacency->num_partitions();
  const std::size_t v = adjacency->num_joints();
  weight = Parameter(kaiming({p * out_channels, in_channels, 1, 1}, in_channels, rng));
  bias = Parameter(Tensor({p * out_channels}));
  if (use_edge_importance) edge_importance = Parameter(Tensor({p, v, v}, 1.0));
}

Tensor GcnLayer::effective_adjacency() const {
  Tensor a = adjacency->matrices;
  if (edge_importance) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] *= edge_importance->value[i];
  }
  return a;
}

Tensor gcn_forward(const GcnLayer& layer, const Tensor& x, GcnCache* cache) {
  const Tensor xb = to_batch(x);
  const std::size_t v = layer.adjacency->num_joints();
  if (xb.dim(3) != v) {
    throw DimensionError("gcn_forward: input has " + std::to_string(xb.dim(3)) +
                         " joints, adjacency has " + std::to_string(v));
  }
  const std::size_t parts = layer.adjacency->num_partitions();
  const std::size_t c_out = layer.out_channels();
  const std::size_t batch = xb.dim(0);
  const std::size_t frames = xb.dim(2);

  Tensor z = conv2d(xb, layer.weight.value, &layer.bias.value, {});
  const Tensor a = layer.effective_adjacency();
  Tensor y({batch, c_out, frames, v});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < parts; ++p) {
      const double* ap = a.data().data() + p * v * v;
      for (std::size_t c = 0; c < c_out; ++c)
        for (std::size_t t = 0; t < frames; ++t) {
          const double* zr = z.data().data() + (((b * parts + p) * c_out + c) * frames + t) * v;
          double* yr = y.data().data() + ((b * c_out + c) * frames + t) * v;
          for (std::size_t i = 0; i < v; ++i) {
            const double zi = zr[i];
            if (zi == 0.0) continue;
            const double* arow = ap + i * v;
            for (std::size_t j = 0; j < v; ++j) yr[j] += zi * arow[j];
          }
        }
    }
  if (cache != nullptr) {
    cache->input = xb;
    cache->projected = std::move(z);
  }
  return x.rank() == 3 ? std::move(y).reshaped({c_out, frames, v}) : y;
}

Tensor gcn_backward(GcnLayer& layer, const GcnCache& cache, const Tensor& grad_out) {
  const std::size_t v = layer.adjacency->num_joints();
  const std::size_t parts = layer.adjacency->num_partitions();
  const std::size_t c_out = layer.out_channels();
  const std::size_t batch = cache.input.dim(0);
  const std::size_t frames = cache.input.dim(2);
  const Tensor gy = to_batch(grad_out);
  const Tensor a = layer.effective_adjacency();

  Tensor dz(cache.projected.shape());
  Tensor da({parts, v, v});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < parts; ++p) {
      const double* ap = a.data().data() + p * v * v;
      double* dap = da.data().data() + p * v * v;
      for (std::size_t c = 0; c < c_out; ++c)
        for (std::size_t t = 0; t < frames; ++t) {
          const std::size_t zoff = (((b * parts + p) * c_out + c) * frames + t) * v;
          const double* zr = cache.projected.data().data() + zoff;
          double* dzr = dz.data().data() + zoff;
          const double* gr = gy.data().data() + ((b * c_out + c) * frames + t) * v;
          for (std::size_t i = 0; i < v; ++i) {
            const double* arow = ap + i * v;
            double* darow = dap + i * v;
            double s = 0.0;
            for (std::size_t j = 0; j < v; ++j) {
              s += gr[j] * arow[j];
              darow[j] += zr[i] * gr[j];
            }
            dzr[i] = s;
          }
        }
    }
  if (layer.edge_importance) {
    for (std::size_t i = 0; i < da.size(); ++i) {
      layer.edge_importance->grad[i] += da[i] * layer.adjacency->matrices[i];
    }
  }
  Conv2dGrads cg = conv2d_backward(cache.input, layer.weight.value, true, dz, {});
  layer.weight.grad += cg.weight;
  layer.bias.grad += cg.bias;
  return grad_out.rank() == 3 ? std::move(cg.input).reshaped({cache.input.dim(1), frames, v})
                              : cg.input;
}

TcnLayer::TcnLayer(std::size_t channels, std::size_t stride_t, std::mt19937_64& rng)
    : weight(kaiming({channels, channels, kTemporalKernel, 1}, channels * kTemporalKernel, rng)),
      bias(Tensor({channels})),
      bn(channels),
      stride(stride_t) {}

StGcnBlock make_block(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                      bool first, std::shared_ptr<const PartitionedAdjacency> adjacency,
                      bool edge_importance, std::mt19937_64& rng) {
  if (stride == 0) throw ConfigError("block stride must be >= 1");
  StGcnBlock block;
  block.gcn = GcnLayer(in_channels, out_channels, std::move(adjacency), edge_importance, rng);
  block.gcn_bn = BatchNorm(out_channels);
  block.tcn = TcnLayer(out_channels, stride, rng);
  if (first) {
    block.residual = ResidualKind::None;
  } else if (in_channels == out_channels && stride == 1) {
    block.residual = ResidualKind::Identity;
  } else {
    block.residual = ResidualKind::Projection;
    ResidualProjection proj;
    proj.weight = Parameter(kaiming({out_channels, in_channels, 1, 1}, in_channels, rng));
    proj.bias = Parameter(Tensor({out_channels}));
    proj.bn = BatchNorm(out_channels);
    proj.stride = stride;
    block.projection = std::move(proj);
  }
  return block;
}

std::size_t block_output_length(std::size_t t, std::size_t stride) {
  return (t - 1) / stride + 1;
}

Tensor block_forward(const StGcnBlock& block, const Tensor& x, Mode mode, BlockCache* cache) {
  const Tensor xb = to_batch(x);
  BlockCache local;
  BlockCache& c = cache != nullptr ? *cache : local;

  Tensor g = gcn_forward(block.gcn, xb, &c.gcn);
  Tensor h = batchnorm_forward(g, block.gcn_bn, mode, BatchNormLayout::BatchChannel, &c.gcn_bn);
  c.hidden = relu(h);
  c.temporal = conv2d(c.hidden, block.tcn.weight.value, &block.tcn.bias.value,
                      block.tcn.conv_params());
  Tensor out = batchnorm_forward(c.temporal, block.tcn.bn, mode, BatchNormLayout::BatchChannel,
                                 &c.tcn_bn);
  switch (block.residual) {
    case ResidualKind::None:
      break;
    case ResidualKind::Identity:
      out += xb;
      break;
    case ResidualKind::Projection: {
      const ResidualProjection& p = *block.projection;
      c.res_conv = conv2d(xb, p.weight.value, &p.bias.value, {{p.stride, 1}, {0, 0}});
      out += batchnorm_forward(c.res_conv, p.bn, mode, BatchNormLayout::BatchChannel, &c.res_bn);
      break;
    }
  }
  c.output = relu(out);
  c.res_input = xb;
  if (x.rank() == 3) {
    return c.output.reshaped({c.output.dim(1), c.output.dim(2), c.output.dim(3)});
  }
  return c.output;
}

Tensor block_backward(StGcnBlock& block, const BlockCache& cache, const Tensor& grad_out) {
  const Tensor gout = to_batch(grad_out);
  const Tensor d_pre = relu_backward(cache.output, gout);

  BatchNormGrads tb =
      batchnorm_backward(block.tcn.bn, cache.tcn_bn, d_pre, BatchNormLayout::BatchChannel);
  block.tcn.bn.gamma.grad += tb.gamma;
  block.tcn.bn.beta.grad += tb.beta;
  Conv2dGrads tc = conv2d_backward(cache.hidden, block.tcn.weight.value, true, tb.input,
                                   block.tcn.conv_params());
  block.tcn.weight.grad += tc.weight;
  block.tcn.bias.grad += tc.bias;
  const Tensor d_h = relu_backward(cache.hidden, tc.input);
  BatchNormGrads gb =
      batchnorm_backward(block.gcn_bn, cache.gcn_bn, d_h, BatchNormLayout::BatchChannel);
  block.gcn_bn.gamma.grad += gb.gamma;
  block.gcn_bn.beta.grad += gb.beta;
  Tensor dx = gcn_backward(block.gcn, cache.gcn, gb.input);

  switch (block.residual) {
    case ResidualKind::None:
      break;
    case ResidualKind::Identity:
      dx += d_pre;
      break;
    case ResidualKind::Projection: {
      ResidualProjection& p = *block.projection;
      BatchNormGrads rb = batchnorm_backward(p.bn, cache.res_bn, d_pre, BatchNormLayout::BatchChannel);
      p.bn.gamma.grad += rb.gamma;
      p.bn.beta.grad += rb.beta;
      Conv2dGrads rc = conv2d_backward(cache.res_input, p.weight.value, true, rb.input,
                                       {{p.stride, 1}, {0, 0}});
      p.weight.grad += rc.weight;
      p.bias.grad += rc.bias;
      dx += rc.input;
      break;
    }
  }
  if (grad_out.rank() == 3) return std::move(dx).reshaped({dx.dim(1), dx.dim(2), dx.dim(3)});
  return dx;
}

void commit_running_stats(StGcnBlock& block, const BlockCache& cache) {
  batchnorm_update_running_stats(block.gcn_bn, cache.gcn_bn);
  batchnorm_update_running_stats(block.tcn.bn, cache.tcn_bn);
  if (block.projection) batchnorm_update_running_stats(block.projection->bn, cache.res_bn);
}

std::vector<BlockSpec> standard_block_plan() {
  return {{64, 1},  {64, 1},  {64, 1},  {64, 1},  {128, 2}, {128, 1},
          {128, 1}, {128, 1}, {256, 2}, {256, 1}, {256, 1}, {256, 1}};
}

std::vector<BlockSpec> compact_block_plan() { return {{16, 1}, {16, 1}, {32, 2}, {32, 1}}; }

std::size_t NetworkConfig::min_frames() const {
  std::size_t m = 1;
  for (const auto& b : blocks) m *= b.stride;
  return m;
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Consensus: return "consensus";
    case Variant::Semantic: return "SF";
    case Variant::Control: return "CF";
    case Variant::SemanticControl: return "SF+CF";
  }
  return "consensus";
}

Variant parse_variant(const std::string& name) {
  std::string s;
  for (char ch : name) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (s == "consensus") return Variant::Consensus;
  if (s == "sf") return Variant::Semantic;
  if (s == "cf") return Variant::Control;
  if (s == "sf+cf" || s == "sfcf") return Variant::SemanticControl;
  throw ConfigError("unknown variant \"" + name + "\" (expected consensus, SF, CF or SF+CF)");
}

bool uses_semantic(Variant v) { return v == Variant::Semantic || v == Variant::SemanticControl; }
bool uses_control(Variant v) { return v == Variant::Control || v == Variant::SemanticControl; }

Network::Network(NetworkConfig cfg) : config(std::move(cfg)) {
  if (config.blocks.empty()) throw ConfigError("network needs at least one block");
  if (config.in_channels == 0) throw ConfigError("in_channels must be >= 1");
  if (config.num_classes == 0) throw ConfigError("num_classes must be >= 1");
  adjacency = std::make_shared<const PartitionedAdjacency>(
      build_partitioned_adjacency(config.layout));
  std::mt19937_64 rng(config.seed);
  data_bn = BatchNorm(config.in_channels * config.layout.num_joints);
  std::size_t in = config.in_channels;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const BlockSpec& spec = config.blocks[i];
    if (spec.out_channels == 0) throw ConfigError("block channel count must be >= 1");
    blocks.push_back(make_block(in, spec.out_channels, spec.stride, i == 0, adjacency,
                                config.edge_importance, rng));
    if (blocks.back().gcn.edge_importance) {
      blocks.back().gcn.edge_importance->trainable = config.edge_importance_trainable;
    }
    in = spec.out_channels;
  }
  fc_weight = Parameter(random_normal({in, config.num_classes}, 1.0 / std::sqrt(double(in)), rng));
  fc_bias = Parameter(Tensor({config.num_classes}));
}

std::vector<NamedParameter> named_parameters(Network& net) {
  std::vector<NamedParameter> out;
  auto bn = [&](const std::string& prefix, BatchNorm& b) {
    out.push_back({prefix + ".gamma", &b.gamma});
    out.push_back({prefix + ".beta", &b.beta});
  };
  bn("data_bn", net.data_bn);
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    StGcnBlock& b = net.blocks[i];
    const std::string p = "blocks." + std::to_string(i);
    out.push_back({p + ".gcn.weight", &b.gcn.weight});
    out.push_back({p + ".gcn.bias", &b.gcn.bias});
    if (b.gcn.edge_importance) out.push_back({p + ".gcn.edge_importance", &*b.gcn.edge_importance});
    bn(p + ".gcn_bn", b.gcn_bn);
    out.push_back({p + ".tcn.weight", &b.tcn.weight});
    out.push_back({p + ".tcn.bias", &b.tcn.bias});
    bn(p + ".tcn.bn", b.tcn.bn);
    if (b.projection) {
      out.push_back({p + ".residual.weight", &b.projection->weight});
      out.push_back({p + ".residual.bias", &b.projection->bias});
      bn(p + ".residual.bn", b.projection->bn);
    }
  }
  out.push_back({"fc.weight", &net.fc_weight});
  out.push_back({"fc.bias", &net.fc_bias});
  FeedbackModules& fb = net.feedback;
  if (fb.compressor) {
    out.push_back({"feedback.compressor.weight", &fb.compressor->weight});
    out.push_back({"feedback.compressor.bias", &fb.compressor->bias});
  }
  if (fb.semantic) {
    SemanticAttentionBlock& s = *fb.semantic;
    out.push_back({"feedback.semantic.q_proj", &s.q_proj});
    out.push_back({"feedback.semantic.kv_proj", &s.kv_proj});
    out.push_back({"feedback.semantic.gate_conv.weight", &s.gate_conv_w});
    out.push_back({"feedback.semantic.gate_conv.bias", &s.gate_conv_b});
    bn("feedback.semantic.gate_bn", s.gate_bn);
    out.push_back({"feedback.semantic.res_gate", &s.res_gate});
  }
  for (std::size_t i = 0; i < fb.control.size(); ++i) {
    ControlFeedbackBlock& c = fb.control[i].block;
    const std::string p = "feedback.control." + std::to_string(i);
    out.push_back({p + ".proj.weight", &c.proj_w});
    out.push_back({p + ".proj.bias", &c.proj_b});
    out.push_back({p + ".eca_kernel", &c.eca_kernel});
    out.push_back({p + ".gate", &c.gate});
  }
  return out;
}

std::vector<NamedBuffer> named_buffers(Network& net) {
  std::vector<NamedBuffer> out;
  auto bn = [&](const std::string& prefix, BatchNorm& b) {
    out.push_back({prefix + ".running_mean", &b.running_mean});
    out.push_back({prefix + ".running_var", &b.running_var});
  };
  bn("data_bn", net.data_bn);
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    StGcnBlock& b = net.blocks[i];
    const std::string p = "blocks." + std::to_string(i);
    bn(p + ".gcn_bn", b.gcn_bn);
    bn(p + ".tcn.bn", b.tcn.bn);
    if (b.projection) bn(p + ".residual.bn", b.projection->bn);
  }
  if (net.feedback.semantic) bn("feedback.semantic.gate_bn", net.feedback.semantic->gate_bn);
  return out;
}

void zero_grad(Network& net) {
  for (auto& np : named_parameters(net)) np.param->zero_grad();
}

std::vector<ParameterCount> itemize_parameters(Network& net) {
  std::vector<ParameterCount> out;
  for (auto& np : named_parameters(net)) {
    if (np.param->trainable) out.push_back({np.name, np.param->size()});
  }
  return out;
}

std::size_t count_parameters(Network& net) {
  std::size_t total = 0;
  for (const auto& item : itemize_parameters(net)) total += item.count;
  return total;
}

namespace {

Tensor data_bn_forward(const BatchNorm& bn, const Tensor& x, Mode mode, BatchNormCache* cache) {
  const std::size_t b = x.dim(0), c = x.dim(1), t = x.dim(2), v = x.dim(3);
  Tensor flat = swap_middle_axes(x).reshaped({b * t, c * v});
  Tensor y = batchnorm_forward(flat, bn, mode, BatchNormLayout::BatchChannel, cache);
  return swap_middle_axes(std::move(y).reshaped({b, t, c, v}));
}

Tensor data_bn_backward(BatchNorm& bn, const BatchNormCache& cache, const Tensor& grad) {
  const std::size_t b = grad.dim(0), c = grad.dim(1), t = grad.dim(2), v = grad.dim(3);
  Tensor flat = swap_middle_axes(grad).reshaped({b * t, c * v});
  BatchNormGrads g = batchnorm_backward(bn, cache, flat, BatchNormLayout::BatchChannel);
  bn.gamma.grad += g.gamma;
  bn.beta.grad += g.beta;
  return swap_middle_axes(std::move(g.input).reshaped({b, t, c, v}));
}

}  // namespace

ForwardResult forward(const Network& net, const Tensor& batch, const Tensor* fb, Mode mode,
                      ForwardTrace* trace) {
  const NetworkConfig& cfg = net.config;
  if (batch.rank() != 5) {
    throw DimensionError("network input must be [N, M, C, T, V], got " +
                         shape_to_string(batch.shape()));
  }
  const std::size_t n = batch.dim(0), m = batch.dim(1), c = batch.dim(2), t = batch.dim(3),
                    v = batch.dim(4);
  if (n == 0 || m == 0) throw DimensionError("network input needs N >= 1 and M >= 1");
  if (c != cfg.in_channels) {
    throw DimensionError("network expects " + std::to_string(cfg.in_channels) +
                         " input channels, got " + std::to_string(c));
  }
  if (v != cfg.layout.num_joints) {
    throw DimensionError("network expects " + std::to_string(cfg.layout.num_joints) +
                         " joints, got " + std::to_string(v));
  }
  if (t < cfg.min_frames()) {
    throw DimensionError("clip has " + std::to_string(t) + " frames; at least " +
                         std::to_string(cfg.min_frames()) + " are required");
  }
  if (fb != nullptr && !(fb->rank() == 2 && fb->dim(0) == n && fb->dim(1) == kFeedbackDim)) {
    throw DimensionError("feedback must be [N, 32], got " + shape_to_string(fb->shape()));
  }
  const bool use_fb = fb != nullptr && net.has_feedback();
  const Tensor* active_fb = use_fb ? fb : nullptr;

  ForwardTrace local;
  ForwardTrace& tr = trace != nullptr ? *trace : local;
  tr.input_shape = batch.shape();
  tr.has_fb = use_fb;
  tr.blocks.assign(net.blocks.size(), BlockCache{});
  tr.control.assign(net.feedback.control.size(), ControlFeedbackCache{});

  const std::size_t bsz = n * m;
  Tensor x = data_bn_forward(net.data_bn, batch.reshaped({bsz, c, t, v}), mode, &tr.data_bn);
  if (net.feedback.semantic) {
    x = semantic_attention_forward(*net.feedback.semantic, x, active_fb, mode, &tr.semantic);
  }
  for (std::size_t i = 0; i < net.blocks.size(); ++i) {
    x = block_forward(net.blocks[i], x, mode, &tr.blocks[i]);
    for (std::size_t k = 0; k < net.feedback.control.size(); ++k) {
      if (net.feedback.control[k].after_block != i) continue;
      x = control_feedback_forward(net.feedback.control[k].block, x, active_fb, &tr.control[k]);
    }
  }
  tr.final_shape = x.shape();
  const std::size_t cf = x.dim(1), tf = x.dim(2);

  const Tensor per_person = global_avg_pool(x);  // [B, C_f]
  Tensor pooled({n, cf});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < cf; ++ch) pooled[s * cf + ch] += per_person[(s * m + p) * cf + ch];
  pooled *= 1.0 / static_cast<double>(m);

  ForwardResult result;
  result.logits = linear(pooled, net.fc_weight.value, &net.fc_bias.value);
  result.features = Tensor({n, cf, tf, v});
  const std::size_t slab = cf * tf * v;
  for (std::size_t s = 0; s < n; ++s) {
    std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(s * m * slab), slab,
                result.features.data().begin() + static_cast<std::ptrdiff_t>(s * slab));
  }
  tr.pooled = std::move(pooled);
  return result;
}

Tensor backward(Network& net, const ForwardTrace& trace, const Tensor& grad_logits,
                const Tensor* grad_features) {
  const std::size_t n = trace.input_shape[0], m = trace.input_shape[1];
  const std::size_t cf = trace.final_shape[1];
  LinearGrads lg = linear_backward(trace.pooled, net.fc_weight.value, true, grad_logits);
  net.fc_weight.grad += lg.weight;
  net.fc_bias.grad += lg.bias;

  Tensor d_person({n * m, cf});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < cf; ++ch)
        d_person[(s * m + p) * cf + ch] = lg.input[s * cf + ch] / static_cast<double>(m);
  Tensor dx = global_avg_pool_backward(trace.final_shape, d_person);
  if (grad_features != nullptr) {
    const std::size_t slab = grad_features->size() / n;
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t k = 0; k < slab; ++k) dx[s * m * slab + k] += (*grad_features)[s * slab + k];
  }

  Tensor d_fb = trace.has_fb ? Tensor({n, kFeedbackDim}) : Tensor();
  Tensor* d_fb_ptr = trace.has_fb ? &d_fb : nullptr;
  for (std::size_t i = net.blocks.size(); i-- > 0;) {
    for (std::size_t k = net.feedback.control.size(); k-- > 0;) {
      if (net.feedback.control[k].after_block != i) continue;
      dx = control_feedback_backward(net.feedback.control[k].block, trace.control[k], dx, d_fb_ptr);
    }
    dx = block_backward(net.blocks[i], trace.blocks[i], dx);
  }
  if (net.feedback.semantic) {
    dx = semantic_attention_backward(*net.feedback.semantic, trace.semantic, dx, d_fb_ptr);
  }
  (void)data_bn_backward(net.data_bn, trace.data_bn, dx);
  return d_fb;
}

void commit_running_stats(Network& net, const ForwardTrace& trace) {
  batchnorm_update_running_stats(net.data_bn, trace.data_bn);
  if (net.feedback.semantic && !trace.semantic.bypass) {
    batchnorm_update_running_stats(net.feedback.semantic->gate_bn, trace.semantic.bn);
  }
  for (std::size_t i = 0; i < net.blocks.size(); ++i) commit_running_stats(net.blocks[i], trace.blocks[i]);
}

NetworkOutput network_forward(const Network& net, const Tensor& clip, const FeedbackState* fb) {
  if (clip.rank() != 4) {
    throw DimensionError("clip must be [M, C, T, V], got " + shape_to_string(clip.shape()));
  }
  Shape batched{1};
  batched.insert(batched.end(), clip.shape().begin(), clip.shape().end());
  Tensor fbm;
  const Tensor* fb_ptr = nullptr;
  if (fb != nullptr && fb->valid) {
    fbm = fb->vector.reshaped({1, kFeedbackDim});
    fb_ptr = &fbm;
  }
  ForwardResult r = forward(net, clip.reshaped(batched), fb_ptr, Mode::Eval);
  NetworkOutput out;
  out.logits = std::move(r.logits).reshaped({net.config.num_classes});
  const Shape& fs = r.features.shape();
  out.features = std::move(r.features).reshaped({fs[1], fs[2], fs[3]});
  return out;
}

}  // namespace rwgcn
