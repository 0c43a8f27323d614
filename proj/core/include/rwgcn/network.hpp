#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rwgcn/feedback.hpp"
#include "rwgcn/ops.hpp"
#include "rwgcn/skeleton.hpp"
#include "rwgcn/tensor.hpp"

namespace rwgcn {

inline constexpr std::size_t kTemporalKernel = 9;
inline constexpr std::size_t kTemporalPadding = 4;

/// Spatial graph convolution: a pointwise projection to P * C_out channels
/// followed by right-multiplication of the joint axis with each (masked)
/// partition matrix, summed over partitions.
struct GcnLayer {
  GcnLayer() = default;
  GcnLayer(std::size_t in_channels, std::size_t out_channels,
           std::shared_ptr<const PartitionedAdjacency> adjacency, bool edge_importance,
           std::mt19937_64& rng);

  std::size_t in_channels() const { return weight.value.dim(1); }
  std::size_t out_channels() const { return weight.value.dim(0) / adjacency->num_partitions(); }
  /// A_p, masked by the edge importance when present. [P, V, V].
  Tensor effective_adjacency() const;

  Parameter weight;  // [P * C_out, C_in, 1, 1]
  Parameter bias;    // [P * C_out]
  std::optional<Parameter> edge_importance;  // [P, V, V], ones at init
  std::shared_ptr<const PartitionedAdjacency> adjacency;
};

struct GcnCache {
  Tensor input;       // [B, C_in, T, V]
  Tensor projected;   // [B, P * C_out, T, V]
};

/// x: [C_in, T, V] or [B, C_in, T, V].
Tensor gcn_forward(const GcnLayer& layer, const Tensor& x, GcnCache* cache = nullptr);
/// Returns dx and accumulates parameter gradients.
Tensor gcn_backward(GcnLayer& layer, const GcnCache& cache, const Tensor& grad_out);

/// 9x1 temporal convolution followed by batch norm.
struct TcnLayer {
  TcnLayer() = default;
  TcnLayer(std::size_t channels, std::size_t stride, std::mt19937_64& rng);

  Conv2dParams conv_params() const { return {{stride, 1}, {kTemporalPadding, 0}}; }

  Parameter weight;  // [C, C, 9, 1]
  Parameter bias;    // [C]
  BatchNorm bn;
  std::size_t stride = 1;
};

enum class ResidualKind { None, Identity, Projection };

struct ResidualProjection {
  Parameter weight;  // [C_out, C_in, 1, 1]
  Parameter bias;    // [C_out]
  BatchNorm bn;
  std::size_t stride = 1;
};

/// y = relu(tcn(relu(bn(gcn(x)))) + residual(x))
struct StGcnBlock {
  std::size_t in_channels() const { return gcn.in_channels(); }
  std::size_t out_channels() const { return gcn.out_channels(); }
  std::size_t stride() const { return tcn.stride; }

  GcnLayer gcn;
  BatchNorm gcn_bn;
  TcnLayer tcn;
  ResidualKind residual = ResidualKind::None;
  std::optional<ResidualProjection> projection;
};

/// Residual rule: none for the first block, identity when shapes are kept,
/// a strided 1x1 projection otherwise.
StGcnBlock make_block(std::size_t in_channels, std::size_t out_channels, std::size_t stride,
                      bool first, std::shared_ptr<const PartitionedAdjacency> adjacency,
                      bool edge_importance, std::mt19937_64& rng);

struct BlockCache {
  GcnCache gcn;
  BatchNormCache gcn_bn;
  Tensor hidden;      // relu(bn(gcn(x)))
  Tensor temporal;    // conv output
  BatchNormCache tcn_bn;
  Tensor res_input;   // x
  Tensor res_conv;    // projection conv output (projection residual only)
  BatchNormCache res_bn;
  Tensor output;      // post-relu block output
};

/// Temporal length after a block: floor((T - 1) / stride) + 1.
std::size_t block_output_length(std::size_t t, std::size_t stride);

Tensor block_forward(const StGcnBlock& block, const Tensor& x, Mode mode,
                     BlockCache* cache = nullptr);
Tensor block_backward(StGcnBlock& block, const BlockCache& cache, const Tensor& grad_out);
void commit_running_stats(StGcnBlock& block, const BlockCache& cache);

struct BlockSpec {
  std::size_t out_channels = 64;
  std::size_t stride = 1;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// The 12-block plan 2 -> 64x4 -> 128x4 -> 256x4 with stride 2 entering the
/// 128 and 256 stages.
std::vector<BlockSpec> standard_block_plan();
/// Four-block 2 -> 16x2 -> 32x2 plan (stride 2 entering the second stage) for
/// toy-scale training.
std::vector<BlockSpec> compact_block_plan();

struct NetworkConfig {
  std::size_t in_channels = 2;
  std::size_t num_classes = 120;
  std::vector<BlockSpec> blocks = standard_block_plan();
  SkeletonLayout layout = build_coco18_layout();
  bool edge_importance = true;
  bool edge_importance_trainable = true;
  std::uint64_t seed = 0;

  std::size_t feature_channels() const { return blocks.back().out_channels; }
  /// Smallest clip length the block strides accept.
  std::size_t min_frames() const;
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

enum class Variant { Consensus, Semantic, Control, SemanticControl };

std::string variant_name(Variant v);
/// Accepts consensus, SF, CF, SF+CF (case-insensitive). Throws ConfigError.
Variant parse_variant(const std::string& name);
bool uses_semantic(Variant v);
bool uses_control(Variant v);

struct ControlAttachment {
  std::size_t after_block = 0;  // zero-based index of the block it follows
  ControlFeedbackBlock block;
};

struct FeedbackModules {
  Variant variant = Variant::Consensus;
  std::optional<FeedbackCompressor> compressor;
  std::optional<SemanticAttentionBlock> semantic;
  std::vector<ControlAttachment> control;
};

struct Network {
  explicit Network(NetworkConfig config);

  NetworkConfig config;
  std::shared_ptr<const PartitionedAdjacency> adjacency;
  BatchNorm data_bn;  // over C * V input channels
  std::vector<StGcnBlock> blocks;
  Parameter fc_weight;  // [C_f, num_classes]
  Parameter fc_bias;    // [num_classes]
  FeedbackModules feedback;

  bool has_feedback() const { return feedback.compressor.has_value(); }
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Every parameter in a fixed order with stable dotted names.
std::vector<NamedParameter> named_parameters(Network& net);
/// Batch-norm running statistics.
std::vector<NamedBuffer> named_buffers(Network& net);
void zero_grad(Network& net);

struct ParameterCount {
  std::string name;
  std::size_t count;
};

/// Trainable scalars, itemized per parameter tensor.
std::vector<ParameterCount> itemize_parameters(Network& net);
std::size_t count_parameters(Network& net);

/// Caches of one windowed forward pass.
struct ForwardTrace {
  Shape input_shape;  // [N, M, C, T, V]
  BatchNormCache data_bn;
  SemanticAttentionCache semantic;
  std::vector<BlockCache> blocks;
  std::vector<ControlFeedbackCache> control;  // parallel to feedback.control
  Shape final_shape;  // [B, C_f, T_f, V]
  Tensor pooled;      // [N, C_f]
  bool has_fb = false;
};

struct ForwardResult {
  Tensor logits;    // [N, K]
  Tensor features;  // [N, C_f, T_f, V] of person slot 0 of each sample
};

/// batch: [N, M, C, T, V]. fb: [N, 32] or nullptr before any feedback
/// exists. Pure: running statistics are only changed by commit_running_stats.
ForwardResult forward(const Network& net, const Tensor& batch, const Tensor* fb, Mode mode,
                      ForwardTrace* trace = nullptr);

/// Backpropagates d(logits) [N, K] and optionally d(features) [N, C_f, T_f, V]
/// through one traced forward pass. Accumulates parameter gradients and
/// returns d(fb) [N, 32] (empty tensor when the pass had no feedback).
Tensor backward(Network& net, const ForwardTrace& trace, const Tensor& grad_logits,
                const Tensor* grad_features);

void commit_running_stats(Network& net, const ForwardTrace& trace);

struct NetworkOutput {
  Tensor logits;    // [K]
  Tensor features;  // [C_f, T_f, V]
};

/// One clip [M, C, T, V] in eval mode.
NetworkOutput network_forward(const Network& net, const Tensor& clip,
                              const FeedbackState* fb = nullptr);

}  // namespace rwgcn
