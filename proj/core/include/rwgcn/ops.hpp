#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <utility>

#include "rwgcn/tensor.hpp"

// Forward and hand-derived backward kernels. Forward kernels are pure; the
// backward kernels return input gradients and parameter gradients separately
// so callers decide where to accumulate them.

namespace rwgcn {

enum class Mode { Train, Eval };

struct Conv2dParams {
  std::pair<std::size_t, std::size_t> stride{1, 1};
  std::pair<std::size_t, std::size_t> padding{0, 0};
};

/// Cross-correlation. Input is [C_in, H, W] or [N, C_in, H, W]; weight is
/// [C_out, C_in, kH, kW]; bias, if given, is [C_out]. The output keeps the
/// input's rank.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
              const Conv2dParams& params);

struct Conv2dGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;  // empty when the forward pass had no bias
};

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                            const Tensor& grad_output, const Conv2dParams& params);

/// Batch normalization over axis 1 of [N, C, ...] (or axis 0 of a rank-1/2
/// tensor laid out as [C, ...]; see BatchNormLayout). Statistics reduce
/// every axis except the channel axis.
struct BatchNorm {
  BatchNorm() = default;
  explicit BatchNorm(std::size_t channels, double gamma_init = 1.0);

  std::size_t channels() const { return gamma.value.size(); }

  Parameter gamma;
  Parameter beta;
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;
};

// Where the channel axis sits. ChannelFirst treats input as [C, rest...];
// BatchChannel treats it as [N, C, rest...].
enum class BatchNormLayout { ChannelFirst, BatchChannel };

struct BatchNormCache {
  Tensor normalized;   // x_hat
  Tensor mean;         // per channel statistics used in the forward pass
  Tensor var;          // biased batch variance (train) or running variance (eval)
  Mode mode = Mode::Eval;
  std::size_t count = 0;  // reduction size per channel
};

Tensor batchnorm_forward(const Tensor& input, const BatchNorm& bn, Mode mode,
                         BatchNormLayout layout, BatchNormCache* cache = nullptr);

/// Exponential moving average update from a train-mode cache. Uses the
/// unbiased variance estimate when the reduction has more than one element.
void batchnorm_update_running_stats(BatchNorm& bn, const BatchNormCache& cache);

/// Forward plus running-stat update in train mode.
Tensor batchnorm(const Tensor& input, BatchNorm& bn, Mode mode,
                 BatchNormLayout layout = BatchNormLayout::ChannelFirst);

struct BatchNormGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};

BatchNormGrads batchnorm_backward(const BatchNorm& bn, const BatchNormCache& cache,
                                  const Tensor& grad_output, BatchNormLayout layout);

Tensor softmax(const Tensor& input, std::size_t axis);

Tensor relu(const Tensor& input);
/// Gradient through relu given the forward *output*.
Tensor relu_backward(const Tensor& output, const Tensor& grad_output);

double sigmoid(double x);

/// Mean over the trailing [T, V] axes: [C, T, V] -> [C] or [N, C, T, V] -> [N, C].
Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output);

/// y = x W + b for x [N, in] (or [in]), W [in, out], b [out].
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor* bias);

struct LinearGrads {
  Tensor input;
  Tensor weight;
  Tensor bias;
};

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                            const Tensor& grad_output);

/// Normal(0, stddev) samples.
Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng);

/// Swaps the two middle axes of [A, B, C, D] -> [A, C, B, D].
Tensor swap_middle_axes(const Tensor& input);

}  // namespace rwgcn
