#include "rwgcn/feedback.hpp"

#include <cmath>

#include "rwgcn/errors.hpp"

namespace rwgcn {
namespace {

const double kScoreScale = 1.0 / std::sqrt(static_cast<double>(kFeedbackDim));

void check_fb(const Tensor& x, const Tensor& fb, std::size_t channels, const char* who) {
  if (x.rank() != 4) {
    throw DimensionError(std::string(who) + ": expected x as [B, C, T, V], got " +
                         shape_to_string(x.shape()));
  }
  if (x.dim(1) != channels) {
    throw DimensionError(std::string(who) + ": channel mismatch, block has " +
                         std::to_string(channels) + ", input has " + std::to_string(x.dim(1)));
  }
  if (fb.rank() != 2 || fb.dim(1) != kFeedbackDim) {
    throw DimensionError(std::string(who) + ": feedback must be [N, 32], got " +
                         shape_to_string(fb.shape()));
  }
  if (fb.dim(0) == 0 || x.dim(0) % fb.dim(0) != 0) {
    throw DimensionError(std::string(who) + ": batch " + std::to_string(x.dim(0)) +
                         " is not a multiple of feedback rows " + std::to_string(fb.dim(0)));
  }
}

Tensor as_batch(const Tensor& x) {
  if (x.rank() != 3) throw DimensionError("expected [C, T, V], got " + shape_to_string(x.shape()));
  return x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
}

}  // namespace

FeedbackCompressor::FeedbackCompressor(std::size_t channels, std::mt19937_64& rng)
    : weight(random_normal({channels, kFeedbackDim}, 1.0 / std::sqrt(double(channels)), rng)),
      bias(Tensor({kFeedbackDim})) {}

Tensor compress_batch(const Tensor& features, const FeedbackCompressor& compressor,
                      CompressCache* cache) {
  if (features.rank() != 4) throw DimensionError("compress_batch expects [N, C, T, V]");
  Tensor pooled = global_avg_pool(features);
  Tensor fb = linear(pooled, compressor.weight.value, &compressor.bias.value);
  if (cache != nullptr) {
    cache->features_shape = features.shape();
    cache->pooled = std::move(pooled);
  }
  return fb;
}

Tensor compress_backward(FeedbackCompressor& compressor, const CompressCache& cache,
                         const Tensor& grad_fb) {
  LinearGrads lg = linear_backward(cache.pooled, compressor.weight.value, true, grad_fb);
  compressor.weight.grad += lg.weight;
  compressor.bias.grad += lg.bias;
  return global_avg_pool_backward(cache.features_shape, lg.input);
}

FeedbackState compress_features(const Tensor& features, const FeedbackCompressor& compressor,
                                std::size_t window_index) {
  FeedbackState state;
  state.vector = compress_batch(as_batch(features), compressor).reshaped({kFeedbackDim});
  state.window_index = window_index;
  state.valid = true;
  return state;
}

SemanticAttentionBlock::SemanticAttentionBlock(std::size_t channels, std::mt19937_64& rng)
    : q_proj(random_normal({channels, kFeedbackDim}, 1.0 / std::sqrt(double(channels)), rng)),
      kv_proj(random_normal({kFeedbackDim, channels}, 1.0 / std::sqrt(double(kFeedbackDim)), rng)),
      gate_conv_w(random_normal({channels, channels, 1, 1}, std::sqrt(2.0 / double(channels)), rng)),
      gate_conv_b(Tensor({channels})),
      gate_bn(channels, 0.0),
      res_gate(Tensor({1}), true, false) {}

Tensor semantic_attention_forward(const SemanticAttentionBlock& block, const Tensor& x,
                                  const Tensor* fb, Mode mode, SemanticAttentionCache* cache) {
  const std::size_t channels = block.channels();
  if (fb == nullptr) {
    if (x.rank() != 4 || x.dim(1) != channels) {
      throw DimensionError("semantic attention: input " + shape_to_string(x.shape()) +
                           " does not match block channels " + std::to_string(channels));
    }
    if (cache != nullptr) {
      *cache = SemanticAttentionCache{};
      cache->bypass = true;
    }
    return x;
  }
  check_fb(x, *fb, channels, "semantic attention");
  const std::size_t batch = x.dim(0);
  const std::size_t rows = fb->dim(0);
  const std::size_t per_row = batch / rows;
  const std::size_t tokens = x.dim(2) * x.dim(3);

  // Folding the query projection into the feedback vector:
  // q_i . fb = x_i . (W_q fb), so each token score is one dot product.
  Tensor query_dir({rows, channels});
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < kFeedbackDim; ++k)
        s += block.q_proj.value[c * kFeedbackDim + k] * (*fb)[n * kFeedbackDim + k];
      query_dir[n * channels + c] = s * kScoreScale;
    }
  Tensor value = linear(*fb, block.kv_proj.value, nullptr);

  Tensor scores({batch, tokens});
  Tensor attended(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = b / per_row;
    double* sc = scores.data().data() + b * tokens;
    for (std::size_t c = 0; c < channels; ++c) {
      const double r = query_dir[n * channels + c];
      const double* xp = x.data().data() + (b * channels + c) * tokens;
      for (std::size_t i = 0; i < tokens; ++i) sc[i] += xp[i] * r;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const double u = value[n * channels + c];
      double* ap = attended.data().data() + (b * channels + c) * tokens;
      for (std::size_t i = 0; i < tokens; ++i) ap[i] = sc[i] * u;
    }
  }

  Tensor gated = conv2d(attended, block.gate_conv_w.value, &block.gate_conv_b.value, {});
  BatchNormCache bn_cache;
  Tensor normalized =
      batchnorm_forward(gated, block.gate_bn, mode, BatchNormLayout::BatchChannel, &bn_cache);
  const double gamma = block.res_gate.value[0];
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += gamma * normalized[i];

  if (cache != nullptr) {
    cache->x = x;
    cache->fb = *fb;
    cache->query_dir = std::move(query_dir);
    cache->value = std::move(value);
    cache->scores = std::move(scores);
    cache->attended = std::move(attended);
    cache->gated = std::move(gated);
    cache->bn = std::move(bn_cache);
    cache->normalized = std::move(normalized);
    cache->bypass = false;
  }
  return out;
}

Tensor semantic_attention_forward(const SemanticAttentionBlock& block, const Tensor& x,
                                  const FeedbackState& fb, Mode mode) {
  const Tensor xb = as_batch(x);
  if (!fb.valid) return semantic_attention_forward(block, xb, nullptr, mode).reshaped(x.shape());
  const Tensor fbm = fb.vector.reshaped({1, kFeedbackDim});
  return semantic_attention_forward(block, xb, &fbm, mode).reshaped(x.shape());
}

Tensor semantic_attention_backward(SemanticAttentionBlock& block,
                                   const SemanticAttentionCache& cache, const Tensor& grad_out,
                                   Tensor* grad_fb) {
  if (cache.bypass) return grad_out;
  const std::size_t channels = block.channels();
  const std::size_t batch = cache.x.dim(0);
  const std::size_t rows = cache.fb.dim(0);
  const std::size_t per_row = batch / rows;
  const std::size_t tokens = cache.x.dim(2) * cache.x.dim(3);
  const double gamma = block.res_gate.value[0];

  double dgamma = 0.0;
  Tensor d_norm(grad_out.shape());
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    dgamma += grad_out[i] * cache.normalized[i];
    d_norm[i] = gamma * grad_out[i];
  }
  block.res_gate.grad[0] += dgamma;

  BatchNormGrads bg =
      batchnorm_backward(block.gate_bn, cache.bn, d_norm, BatchNormLayout::BatchChannel);
  block.gate_bn.gamma.grad += bg.gamma;
  block.gate_bn.beta.grad += bg.beta;
  Conv2dGrads cg = conv2d_backward(cache.attended, block.gate_conv_w.value, true, bg.input, {});
  block.gate_conv_w.grad += cg.weight;
  block.gate_conv_b.grad += cg.bias;
  const Tensor& d_att = cg.input;

  Tensor dx = grad_out;
  Tensor d_query_dir({rows, channels});
  Tensor d_value({rows, channels});
  std::vector<double> d_scores(tokens);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = b / per_row;
    const double* sc = cache.scores.data().data() + b * tokens;
    std::fill(d_scores.begin(), d_scores.end(), 0.0);
    for (std::size_t c = 0; c < channels; ++c) {
      const double u = cache.value[n * channels + c];
      const double* da = d_att.data().data() + (b * channels + c) * tokens;
      double du = 0.0;
      for (std::size_t i = 0; i < tokens; ++i) {
        d_scores[i] += da[i] * u;
        du += da[i] * sc[i];
      }
      d_value[n * channels + c] += du;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      const double r = cache.query_dir[n * channels + c];
      const double* xp = cache.x.data().data() + (b * channels + c) * tokens;
      double* dxp = dx.data().data() + (b * channels + c) * tokens;
      double dr = 0.0;
      for (std::size_t i = 0; i < tokens; ++i) {
        dxp[i] += d_scores[i] * r;
        dr += d_scores[i] * xp[i];
      }
      d_query_dir[n * channels + c] += dr;
    }
  }

  LinearGrads vg = linear_backward(cache.fb, block.kv_proj.value, false, d_value);
  block.kv_proj.grad += vg.weight;
  Tensor d_fb = std::move(vg.input);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const double g = d_query_dir[n * channels + c] * kScoreScale;
      for (std::size_t k = 0; k < kFeedbackDim; ++k) {
        block.q_proj.grad[c * kFeedbackDim + k] += g * cache.fb[n * kFeedbackDim + k];
        d_fb[n * kFeedbackDim + k] += g * block.q_proj.value[c * kFeedbackDim + k];
      }
    }
  if (grad_fb != nullptr) *grad_fb += d_fb;
  return dx;
}

ControlFeedbackBlock::ControlFeedbackBlock(std::size_t channels, std::mt19937_64& rng)
    : proj_w(random_normal({kFeedbackDim, channels}, 1.0 / std::sqrt(double(kFeedbackDim)), rng)),
      proj_b(Tensor({channels})),
      eca_kernel(random_normal({kEcaKernel}, 1.0 / std::sqrt(double(kEcaKernel)), rng)),
      gate(Tensor({1}), true, false) {}

namespace {

// e_c = sum_k K[k] * p[c + k - 1], zero padded.
Tensor eca_conv(const Tensor& kernel, const Tensor& p, std::size_t rows, std::size_t channels) {
  Tensor e({rows, channels});
  const auto half = static_cast<std::ptrdiff_t>(ControlFeedbackBlock::kEcaKernel / 2);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      double s = 0.0;
      for (std::size_t k = 0; k < ControlFeedbackBlock::kEcaKernel; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(c + k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(channels)) continue;
        s += kernel[k] * p[n * channels + static_cast<std::size_t>(src)];
      }
      e[n * channels + c] = s;
    }
  return e;
}

}  // namespace

Tensor control_feedback_multipliers(const ControlFeedbackBlock& block, const Tensor& fb_row) {
  const std::size_t channels = block.channels();
  const Tensor fbm = fb_row.reshaped({1, kFeedbackDim});
  const Tensor p = linear(fbm, block.proj_w.value, &block.proj_b.value);
  const Tensor e = eca_conv(block.eca_kernel.value, p, 1, channels);
  Tensor s({channels});
  for (std::size_t c = 0; c < channels; ++c) {
    s[c] = 1.0 + block.gate.value[0] * (2.0 * sigmoid(e[c]) - 1.0);
  }
  return s;
}

Tensor control_feedback_forward(const ControlFeedbackBlock& block, const Tensor& x,
                                const Tensor* fb, ControlFeedbackCache* cache) {
  const std::size_t channels = block.channels();
  if (fb == nullptr) {
    if (x.rank() != 4 || x.dim(1) != channels) {
      throw DimensionError("control feedback: input " + shape_to_string(x.shape()) +
                           " does not match block channels " + std::to_string(channels));
    }
    if (cache != nullptr) {
      *cache = ControlFeedbackCache{};
      cache->bypass = true;
    }
    return x;
  }
  check_fb(x, *fb, channels, "control feedback");
  const std::size_t batch = x.dim(0);
  const std::size_t rows = fb->dim(0);
  const std::size_t per_row = batch / rows;
  const std::size_t plane = x.dim(2) * x.dim(3);

  Tensor p = linear(*fb, block.proj_w.value, &block.proj_b.value);
  Tensor w = eca_conv(block.eca_kernel.value, p, rows, channels);
  for (double& v : w.data()) v = sigmoid(v);
  const double gamma = block.gate.value[0];

  Tensor out(x.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = b / per_row;
    for (std::size_t c = 0; c < channels; ++c) {
      const double s = 1.0 + gamma * (2.0 * w[n * channels + c] - 1.0);
      const std::size_t base = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) out[base + i] = x[base + i] * s;
    }
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->fb = *fb;
    cache->proj = std::move(p);
    cache->weights = std::move(w);
    cache->bypass = false;
  }
  return out;
}

Tensor control_feedback_forward(const ControlFeedbackBlock& block, const Tensor& x,
                                const FeedbackState& fb) {
  const Tensor xb = as_batch(x);
  if (!fb.valid) return control_feedback_forward(block, xb, nullptr).reshaped(x.shape());
  const Tensor fbm = fb.vector.reshaped({1, kFeedbackDim});
  return control_feedback_forward(block, xb, &fbm).reshaped(x.shape());
}

Tensor control_feedback_backward(ControlFeedbackBlock& block, const ControlFeedbackCache& cache,
                                 const Tensor& grad_out, Tensor* grad_fb) {
  if (cache.bypass) return grad_out;
  const std::size_t channels = block.channels();
  const std::size_t batch = cache.x.dim(0);
  const std::size_t rows = cache.fb.dim(0);
  const std::size_t per_row = batch / rows;
  const std::size_t plane = cache.x.dim(2) * cache.x.dim(3);
  const double gamma = block.gate.value[0];

  Tensor dx(grad_out.shape());
  Tensor d_w({rows, channels});
  double dgamma = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t n = b / per_row;
    for (std::size_t c = 0; c < channels; ++c) {
      const double w = cache.weights[n * channels + c];
      const double s = 1.0 + gamma * (2.0 * w - 1.0);
      const std::size_t base = (b * channels + c) * plane;
      double gx = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        dx[base + i] = grad_out[base + i] * s;
        gx += grad_out[base + i] * cache.x[base + i];
      }
      dgamma += gx * (2.0 * w - 1.0);
      d_w[n * channels + c] += gx * 2.0 * gamma;
    }
  }
  block.gate.grad[0] += dgamma;

  // Through the sigmoid and the channel conv.
  Tensor d_e({rows, channels});
  for (std::size_t i = 0; i < d_e.size(); ++i) {
    const double w = cache.weights[i];
    d_e[i] = d_w[i] * w * (1.0 - w);
  }
  Tensor d_p({rows, channels});
  const auto half = static_cast<std::ptrdiff_t>(ControlFeedbackBlock::kEcaKernel / 2);
  for (std::size_t n = 0; n < rows; ++n)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t k = 0; k < ControlFeedbackBlock::kEcaKernel; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(c + k) - half;
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(channels)) continue;
        const std::size_t s = n * channels + static_cast<std::size_t>(src);
        block.eca_kernel.grad[k] += d_e[n * channels + c] * cache.proj[s];
        d_p[s] += d_e[n * channels + c] * block.eca_kernel.value[k];
      }
  LinearGrads lg = linear_backward(cache.fb, block.proj_w.value, true, d_p);
  block.proj_w.grad += lg.weight;
  block.proj_b.grad += lg.bias;
  if (grad_fb != nullptr) *grad_fb += lg.input;
  return dx;
}

}  // namespace rwgcn
