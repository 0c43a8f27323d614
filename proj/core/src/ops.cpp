#include "rwgcn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "rwgcn/errors.hpp"

namespace rwgcn {
namespace {

struct ConvGeometry {
  std::size_t batch, c_in, h, w, c_out, kh, kw, out_h, out_w;
  std::ptrdiff_t sh, sw, ph, pw;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weight, const Conv2dParams& p) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw DimensionError("conv2d input must be [C, H, W] or [N, C, H, W], got " +
                         shape_to_string(input.shape()));
  }
  if (weight.rank() != 4) {
    throw DimensionError("conv2d weight must be [C_out, C_in, kH, kW], got " +
                         shape_to_string(weight.shape()));
  }
  if (p.stride.first == 0 || p.stride.second == 0) {
    throw ConfigError("conv2d stride components must be >= 1");
  }
  const std::size_t off = input.rank() == 4 ? 1 : 0;
  ConvGeometry g{};
  g.batch = off ? input.dim(0) : 1;
  g.c_in = input.dim(off);
  g.h = input.dim(off + 1);
  g.w = input.dim(off + 2);
  g.c_out = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  if (weight.dim(1) != g.c_in) {
    throw DimensionError("conv2d channel mismatch: input has " + std::to_string(g.c_in) +
                         " channels, weight expects " + std::to_string(weight.dim(1)));
  }
  const std::size_t padded_h = g.h + 2 * p.padding.first;
  const std::size_t padded_w = g.w + 2 * p.padding.second;
  if (g.kh > padded_h || g.kw > padded_w) {
    throw DimensionError("conv2d kernel does not fit the padded input");
  }
  g.out_h = (padded_h - g.kh) / p.stride.first + 1;
  g.out_w = (padded_w - g.kw) / p.stride.second + 1;
  g.sh = static_cast<std::ptrdiff_t>(p.stride.first);
  g.sw = static_cast<std::ptrdiff_t>(p.stride.second);
  g.ph = static_cast<std::ptrdiff_t>(p.padding.first);
  g.pw = static_cast<std::ptrdiff_t>(p.padding.second);
  return g;
}

// Output positions o in [lo, hi) such that o*stride + k - pad lands in [0, extent).
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t out_extent,
                                                      std::ptrdiff_t in_extent,
                                                      std::ptrdiff_t stride, std::ptrdiff_t k,
                                                      std::ptrdiff_t pad) {
  std::ptrdiff_t lo = 0;
  if (pad - k > 0) lo = (pad - k + stride - 1) / stride;
  std::ptrdiff_t hi_num = in_extent - 1 + pad - k;
  if (hi_num < 0) return {0, 0};
  std::ptrdiff_t hi = std::min(out_extent, hi_num / stride + 1);
  return {lo, std::max(lo, hi)};
}

Shape conv_output_shape(const Tensor& input, const ConvGeometry& g) {
  if (input.rank() == 4) return {g.batch, g.c_out, g.out_h, g.out_w};
  return {g.c_out, g.out_h, g.out_w};
}

struct BnView {
  std::size_t outer, channels, inner;
};

BnView bn_view(const Tensor& x, BatchNormLayout layout) {
  if (layout == BatchNormLayout::ChannelFirst) {
    if (x.rank() < 1) throw DimensionError("batchnorm input must have a channel axis");
    return {1, x.dim(0), x.size() / std::max<std::size_t>(x.dim(0), 1)};
  }
  if (x.rank() < 2) throw DimensionError("batchnorm [N, C, ...] input needs rank >= 2");
  const std::size_t outer = x.dim(0);
  const std::size_t channels = x.dim(1);
  const std::size_t denom = outer * channels;
  return {outer, channels, denom == 0 ? 0 : x.size() / denom};
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor* bias,
              const Conv2dParams& params) {
  const ConvGeometry g = conv_geometry(input, weight, params);
  if (bias != nullptr && bias->size() != g.c_out) {
    throw DimensionError("conv2d bias length must equal C_out");
  }
  Tensor out(conv_output_shape(input, g));
  const double* in = input.data().data();
  const double* wt = weight.data().data();
  double* o = out.data().data();
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.out_h * g.out_w;

  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      double* op = o + (n * g.c_out + co) * out_plane;
      if (bias != nullptr) std::fill(op, op + out_plane, (*bias)[co]);
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const double* ip = in + (n * g.c_in + ci) * in_plane;
        for (std::size_t a = 0; a < g.kh; ++a) {
          const auto [oh_lo, oh_hi] = valid_range(static_cast<std::ptrdiff_t>(g.out_h),
                                                  static_cast<std::ptrdiff_t>(g.h), g.sh,
                                                  static_cast<std::ptrdiff_t>(a), g.ph);
          for (std::size_t b = 0; b < g.kw; ++b) {
            const double wv = wt[((co * g.c_in + ci) * g.kh + a) * g.kw + b];
            const auto [ow_lo, ow_hi] = valid_range(static_cast<std::ptrdiff_t>(g.out_w),
                                                    static_cast<std::ptrdiff_t>(g.w), g.sw,
                                                    static_cast<std::ptrdiff_t>(b), g.pw);
            for (std::ptrdiff_t oh = oh_lo; oh < oh_hi; ++oh) {
              const std::ptrdiff_t ih = oh * g.sh + static_cast<std::ptrdiff_t>(a) - g.ph;
              const double* irow = ip + static_cast<std::size_t>(ih) * g.w;
              double* orow = op + static_cast<std::size_t>(oh) * g.out_w;
              for (std::ptrdiff_t ow = ow_lo; ow < ow_hi; ++ow) {
                const std::ptrdiff_t iw = ow * g.sw + static_cast<std::ptrdiff_t>(b) - g.pw;
                orow[ow] += wv * irow[iw];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                            const Tensor& grad_output, const Conv2dParams& params) {
  const ConvGeometry g = conv_geometry(input, weight, params);
  if (grad_output.shape() != conv_output_shape(input, g)) {
    throw DimensionError("conv2d_backward grad_output shape mismatch");
  }
  Conv2dGrads grads{Tensor(input.shape()), Tensor(weight.shape()), Tensor()};
  if (has_bias) grads.bias = Tensor({g.c_out});

  const double* in = input.data().data();
  const double* wt = weight.data().data();
  const double* go = grad_output.data().data();
  double* gi = grads.input.data().data();
  double* gw = grads.weight.data().data();
  const std::size_t in_plane = g.h * g.w;
  const std::size_t out_plane = g.out_h * g.out_w;

  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.c_out; ++co) {
      const double* gop = go + (n * g.c_out + co) * out_plane;
      if (has_bias) {
        double s = 0.0;
        for (std::size_t i = 0; i < out_plane; ++i) s += gop[i];
        grads.bias[co] += s;
      }
      for (std::size_t ci = 0; ci < g.c_in; ++ci) {
        const double* ip = in + (n * g.c_in + ci) * in_plane;
        double* gip = gi + (n * g.c_in + ci) * in_plane;
        for (std::size_t a = 0; a < g.kh; ++a) {
          const auto [oh_lo, oh_hi] = valid_range(static_cast<std::ptrdiff_t>(g.out_h),
                                                  static_cast<std::ptrdiff_t>(g.h), g.sh,
                                                  static_cast<std::ptrdiff_t>(a), g.ph);
          for (std::size_t b = 0; b < g.kw; ++b) {
            const std::size_t widx = ((co * g.c_in + ci) * g.kh + a) * g.kw + b;
            const double wv = wt[widx];
            const auto [ow_lo, ow_hi] = valid_range(static_cast<std::ptrdiff_t>(g.out_w),
                                                    static_cast<std::ptrdiff_t>(g.w), g.sw,
                                                    static_cast<std::ptrdiff_t>(b), g.pw);
            double acc = 0.0;
            for (std::ptrdiff_t oh = oh_lo; oh < oh_hi; ++oh) {
              const std::ptrdiff_t ih = oh * g.sh + static_cast<std::ptrdiff_t>(a) - g.ph;
              const double* irow = ip + static_cast<std::size_t>(ih) * g.w;
              double* girow = gip + static_cast<std::size_t>(ih) * g.w;
              const double* grow = gop + static_cast<std::size_t>(oh) * g.out_w;
              for (std::ptrdiff_t ow = ow_lo; ow < ow_hi; ++ow) {
                const std::ptrdiff_t iw = ow * g.sw + static_cast<std::ptrdiff_t>(b) - g.pw;
                acc += grow[ow] * irow[iw];
                girow[iw] += wv * grow[ow];
              }
            }
            gw[widx] += acc;
          }
        }
      }
    }
  }
  return grads;
}

BatchNorm::BatchNorm(std::size_t channels, double gamma_init)
    : gamma(Tensor({channels}, gamma_init), true, false),
      beta(Tensor({channels}, 0.0), true, false),
      running_mean({channels}, 0.0),
      running_var({channels}, 1.0) {}

Tensor batchnorm_forward(const Tensor& input, const BatchNorm& bn, Mode mode,
                         BatchNormLayout layout, BatchNormCache* cache) {
  if (!(bn.eps > 0.0)) throw ConfigError("batchnorm eps must be > 0");
  const BnView v = bn_view(input, layout);
  if (v.channels != bn.channels()) {
    throw DimensionError("batchnorm channel mismatch: input has " + std::to_string(v.channels) +
                         ", parameters have " + std::to_string(bn.channels()));
  }
  const std::size_t count = v.outer * v.inner;
  if (mode == Mode::Train && count == 0) {
    throw DimensionError("batchnorm train mode needs at least one element per channel");
  }

  Tensor mean({v.channels});
  Tensor var({v.channels});
  if (mode == Mode::Train) {
    for (std::size_t c = 0; c < v.channels; ++c) {
      double s = 0.0;
      for (std::size_t o = 0; o < v.outer; ++o) {
        const double* p = input.data().data() + (o * v.channels + c) * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) s += p[i];
      }
      const double m = s / static_cast<double>(count);
      double sq = 0.0;
      for (std::size_t o = 0; o < v.outer; ++o) {
        const double* p = input.data().data() + (o * v.channels + c) * v.inner;
        for (std::size_t i = 0; i < v.inner; ++i) sq += (p[i] - m) * (p[i] - m);
      }
      mean[c] = m;
      // A single-element channel has zero variance; eps keeps the scale finite.
      var[c] = std::max(sq / static_cast<double>(count), 0.0);
    }
  } else {
    mean = bn.running_mean;
    var = bn.running_var;
  }

  Tensor out(input.shape());
  Tensor xhat(input.shape());
  for (std::size_t c = 0; c < v.channels; ++c) {
    const double inv_std = 1.0 / std::sqrt(var[c] + bn.eps);
    const double gm = bn.gamma.value[c];
    const double bt = bn.beta.value[c];
    for (std::size_t o = 0; o < v.outer; ++o) {
      const std::size_t base = (o * v.channels + c) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) {
        const double xh = (input[base + i] - mean[c]) * inv_std;
        xhat[base + i] = xh;
        out[base + i] = gm * xh + bt;
      }
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(xhat);
    cache->mean = std::move(mean);
    cache->var = std::move(var);
    cache->mode = mode;
    cache->count = count;
  }
  return out;
}

void batchnorm_update_running_stats(BatchNorm& bn, const BatchNormCache& cache) {
  if (cache.mode != Mode::Train) return;
  const double m = bn.momentum;
  const double n = static_cast<double>(cache.count);
  const double unbias = cache.count > 1 ? n / (n - 1.0) : 1.0;
  for (std::size_t c = 0; c < bn.channels(); ++c) {
    bn.running_mean[c] = (1.0 - m) * bn.running_mean[c] + m * cache.mean[c];
    bn.running_var[c] = (1.0 - m) * bn.running_var[c] + m * cache.var[c] * unbias;
  }
}

Tensor batchnorm(const Tensor& input, BatchNorm& bn, Mode mode, BatchNormLayout layout) {
  BatchNormCache cache;
  Tensor out = batchnorm_forward(input, bn, mode, layout, &cache);
  batchnorm_update_running_stats(bn, cache);
  return out;
}

BatchNormGrads batchnorm_backward(const BatchNorm& bn, const BatchNormCache& cache,
                                  const Tensor& grad_output, BatchNormLayout layout) {
  if (grad_output.shape() != cache.normalized.shape()) {
    throw DimensionError("batchnorm_backward grad_output shape mismatch");
  }
  const BnView v = bn_view(grad_output, layout);
  BatchNormGrads grads{Tensor(grad_output.shape()), Tensor({v.channels}), Tensor({v.channels})};
  const double n = static_cast<double>(cache.count);
  for (std::size_t c = 0; c < v.channels; ++c) {
    const double inv_std = 1.0 / std::sqrt(cache.var[c] + bn.eps);
    const double gm = bn.gamma.value[c];
    double sum_g = 0.0;
    double sum_g_xhat = 0.0;
    for (std::size_t o = 0; o < v.outer; ++o) {
      const std::size_t base = (o * v.channels + c) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) {
        sum_g += grad_output[base + i];
        sum_g_xhat += grad_output[base + i] * cache.normalized[base + i];
      }
    }
    grads.gamma[c] = sum_g_xhat;
    grads.beta[c] = sum_g;
    for (std::size_t o = 0; o < v.outer; ++o) {
      const std::size_t base = (o * v.channels + c) * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) {
        const double g = grad_output[base + i];
        if (cache.mode == Mode::Train) {
          const double xh = cache.normalized[base + i];
          grads.input[base + i] = gm * inv_std * (g - sum_g / n - xh * sum_g_xhat / n);
        } else {
          grads.input[base + i] = gm * inv_std * g;
        }
      }
    }
  }
  return grads;
}

Tensor softmax(const Tensor& input, std::size_t axis) {
  if (axis >= input.rank()) {
    throw DimensionError("softmax axis " + std::to_string(axis) + " out of range for shape " +
                         shape_to_string(input.shape()));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= input.dim(i);
  for (std::size_t i = axis + 1; i < input.rank(); ++i) inner *= input.dim(i);
  const std::size_t len = input.dim(axis);
  Tensor out(input.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * len * inner + i;
      double mx = -INFINITY;
      for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, input[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(input[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  }
  return out;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& output, const Tensor& grad_output) {
  if (output.shape() != grad_output.shape()) {
    throw DimensionError("relu_backward shape mismatch");
  }
  Tensor g(grad_output.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = output[i] > 0.0 ? grad_output[i] : 0.0;
  return g;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 3 && input.rank() != 4) {
    throw DimensionError("global_avg_pool expects [C, T, V] or [N, C, T, V], got " +
                         shape_to_string(input.shape()));
  }
  const std::size_t off = input.rank() == 4 ? 1 : 0;
  const std::size_t n = off ? input.dim(0) : 1;
  const std::size_t c = input.dim(off);
  const std::size_t slab = input.dim(off + 1) * input.dim(off + 2);
  if (slab == 0) throw DimensionError("global_avg_pool over an empty T x V slab");
  Tensor out(off ? Shape{n, c} : Shape{c});
  for (std::size_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    const double* p = input.data().data() + i * slab;
    for (std::size_t k = 0; k < slab; ++k) s += p[k];
    out[i] = s / static_cast<double>(slab);
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& grad_output) {
  Tensor g(input_shape);
  const std::size_t slab = g.size() / grad_output.size();
  for (std::size_t i = 0; i < grad_output.size(); ++i) {
    const double v = grad_output[i] / static_cast<double>(slab);
    std::fill(g.data().begin() + static_cast<std::ptrdiff_t>(i * slab),
              g.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * slab), v);
  }
  return g;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor* bias) {
  if (weight.rank() != 2) throw DimensionError("linear weight must be [in, out]");
  const std::size_t in = weight.dim(0);
  const std::size_t outd = weight.dim(1);
  if (input.size() % in != 0 || input.shape().back() != in) {
    throw DimensionError("linear input trailing axis " + shape_to_string(input.shape()) +
                         " does not match weight in=" + std::to_string(in));
  }
  if (bias != nullptr && bias->size() != outd) throw DimensionError("linear bias length");
  const std::size_t rows = input.size() / in;
  Tensor out(input.rank() == 1 ? Shape{outd} : Shape{rows, outd});
  for (std::size_t r = 0; r < rows; ++r) {
    double* o = out.data().data() + r * outd;
    if (bias != nullptr) std::copy(bias->data().begin(), bias->data().end(), o);
    for (std::size_t i = 0; i < in; ++i) {
      const double x = input[r * in + i];
      const double* w = weight.data().data() + i * outd;
      for (std::size_t j = 0; j < outd; ++j) o[j] += x * w[j];
    }
  }
  return out;
}

LinearGrads linear_backward(const Tensor& input, const Tensor& weight, bool has_bias,
                            const Tensor& grad_output) {
  const std::size_t in = weight.dim(0);
  const std::size_t outd = weight.dim(1);
  const std::size_t rows = input.size() / in;
  if (grad_output.size() != rows * outd) throw DimensionError("linear_backward shape mismatch");
  LinearGrads g{Tensor(input.shape()), Tensor(weight.shape()), Tensor()};
  if (has_bias) g.bias = Tensor({outd});
  for (std::size_t r = 0; r < rows; ++r) {
    const double* go = grad_output.data().data() + r * outd;
    for (std::size_t i = 0; i < in; ++i) {
      const double x = input[r * in + i];
      const double* w = weight.data().data() + i * outd;
      double* gw = g.weight.data().data() + i * outd;
      double acc = 0.0;
      for (std::size_t j = 0; j < outd; ++j) {
        acc += go[j] * w[j];
        gw[j] += x * go[j];
      }
      g.input[r * in + i] = acc;
    }
    if (has_bias) {
      for (std::size_t j = 0; j < outd; ++j) g.bias[j] += go[j];
    }
  }
  return g;
}

Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor swap_middle_axes(const Tensor& input) {
  if (input.rank() != 4) throw DimensionError("swap_middle_axes expects a rank-4 tensor");
  const std::size_t a = input.dim(0), b = input.dim(1), c = input.dim(2), d = input.dim(3);
  Tensor out({a, c, b, d});
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k) {
        const double* src = input.data().data() + ((i * b + j) * c + k) * d;
        double* dst = out.data().data() + ((i * c + k) * b + j) * d;
        std::copy(src, src + d, dst);
      }
  return out;
}

}  // namespace rwgcn
