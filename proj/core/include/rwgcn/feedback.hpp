#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "rwgcn/ops.hpp"
#include "rwgcn/tensor.hpp"

namespace rwgcn {

/// Width of the compressed past-window summary.
inline constexpr std::size_t kFeedbackDim = 32;

/// Compressed high-level features of the previous window. All-zero until the
/// first window of a stream completes.
struct FeedbackState {
  Tensor vector{Shape{kFeedbackDim}};
  std::size_t window_index = 0;
  bool valid = false;
};

/// GAP over (T, V) followed by a linear map C -> 32.
struct FeedbackCompressor {
  FeedbackCompressor() = default;
  FeedbackCompressor(std::size_t channels, std::mt19937_64& rng);

  Parameter weight;  // [C, 32]
  Parameter bias;    // [32]
};

/// features: [C, T_f, V] of a single person.
FeedbackState compress_features(const Tensor& features, const FeedbackCompressor& compressor,
                                std::size_t window_index = 0);

struct CompressCache {
  Shape features_shape;
  Tensor pooled;  // [N, C]
};

/// Batched form: [N, C, T_f, V] -> [N, 32].
Tensor compress_batch(const Tensor& features, const FeedbackCompressor& compressor,
                      CompressCache* cache = nullptr);
/// Returns d(features) and accumulates compressor parameter gradients.
Tensor compress_backward(FeedbackCompressor& compressor, const CompressCache& cache,
                         const Tensor& grad_fb);

/// Cross-attention between the current per-joint tokens and the single
/// feedback token. Queries come from x; the feedback vector is both key
/// and value source through one projection. Scores are scaled by sqrt(32)
/// and left unnormalized. The result is gated by a 1x1 conv, a batch norm
/// whose gamma starts at zero, and a scalar residual gate starting at zero.
struct SemanticAttentionBlock {
  SemanticAttentionBlock() = default;
  SemanticAttentionBlock(std::size_t channels, std::mt19937_64& rng);

  std::size_t channels() const { return q_proj.value.dim(0); }

  Parameter q_proj;       // [C, 32]
  Parameter kv_proj;      // [32, C]
  Parameter gate_conv_w;  // [C, C, 1, 1]
  Parameter gate_conv_b;  // [C]
  BatchNorm gate_bn;      // gamma initialized to 0
  Parameter res_gate;     // [1], initialized to 0
};

struct SemanticAttentionCache {
  Tensor x;           // [B, C, T, V]
  Tensor fb;          // [N, 32]
  Tensor query_dir;   // [N, C]  W_q fb / sqrt(32)
  Tensor value;       // [N, C]  fb W_kv
  Tensor scores;      // [B, T*V]
  Tensor attended;    // [B, C, T, V]
  Tensor gated;       // conv output
  BatchNormCache bn;
  Tensor normalized;  // gate_bn output
  bool bypass = false;
};

/// x: [B, C, T, V] with B = N * persons, fb: [N, 32] (nullptr = no feedback
/// yet, in which case the block is the identity). Person b uses fb row
/// b / (B / N).
Tensor semantic_attention_forward(const SemanticAttentionBlock& block, const Tensor& x,
                                  const Tensor* fb, Mode mode,
                                  SemanticAttentionCache* cache = nullptr);

/// Single-sample form: x [C, T, V].
Tensor semantic_attention_forward(const SemanticAttentionBlock& block, const Tensor& x,
                                  const FeedbackState& fb, Mode mode = Mode::Eval);

/// Returns dx; adds d(fb) into *grad_fb when it is non-null and the forward
/// pass was not bypassed.
Tensor semantic_attention_backward(SemanticAttentionBlock& block,
                                   const SemanticAttentionCache& cache, const Tensor& grad_out,
                                   Tensor* grad_fb);

/// Efficient-channel-attention style reweighting driven by the feedback
/// vector: w = sigmoid(eca(proj(fb))), out_c = x_c * (1 + gate * (2 w_c - 1)).
struct ControlFeedbackBlock {
  static constexpr std::size_t kEcaKernel = 3;

  ControlFeedbackBlock() = default;
  ControlFeedbackBlock(std::size_t channels, std::mt19937_64& rng);

  std::size_t channels() const { return proj_w.value.dim(1); }

  Parameter proj_w;      // [32, C]
  Parameter proj_b;      // [C]
  Parameter eca_kernel;  // [3], 1-D conv over the channel axis, zero padded
  Parameter gate;        // [1], initialized to 0
};

struct ControlFeedbackCache {
  Tensor x;        // [B, C, T, V]
  Tensor fb;       // [N, 32]
  Tensor proj;     // [N, C]
  Tensor weights;  // [N, C] sigmoid outputs
  bool bypass = false;
};

Tensor control_feedback_forward(const ControlFeedbackBlock& block, const Tensor& x,
                                const Tensor* fb, ControlFeedbackCache* cache = nullptr);
Tensor control_feedback_forward(const ControlFeedbackBlock& block, const Tensor& x,
                                const FeedbackState& fb);
Tensor control_feedback_backward(ControlFeedbackBlock& block, const ControlFeedbackCache& cache,
                                 const Tensor& grad_out, Tensor* grad_fb);

/// Per-channel multipliers 1 + gate * (2 w - 1) for one feedback row.
Tensor control_feedback_multipliers(const ControlFeedbackBlock& block, const Tensor& fb_row);

}  // namespace rwgcn
