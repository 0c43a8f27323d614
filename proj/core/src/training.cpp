#include "rwgcn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "rwgcn/engine.hpp"
#include "rwgcn/errors.hpp"
#include "rwgcn/gradcheck.hpp"
#include "rwgcn/growing.hpp"
#include "rwgcn/noise.hpp"

namespace rwgcn {

LossResult cross_entropy_loss(const Tensor& logits, std::size_t label) {
  if (label >= logits.size()) {
    throw DomainError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(logits.size()) + " classes");
  }
  const Tensor flat = logits.reshaped({logits.size()});
  LossResult r;
  r.grad = softmax(flat, 0);
  double mx = flat[0];
  for (double v : flat.data()) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : flat.data()) z += std::exp(v - mx);
  r.loss = -(flat[label] - mx - std::log(z));
  r.grad[label] -= 1.0;
  r.grad = std::move(r.grad).reshaped(logits.shape());
  return r;
}

void OptimizerConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
  if (!(decay_factor > 1.0)) throw ConfigError("decay factor must be > 1");
}

double schedule_lr(std::size_t epoch, const OptimizerConfig& config) {
  std::size_t restart = 0;
  for (std::size_t r : config.restart_epochs) {
    if (r <= epoch) restart = std::max(restart, r);
  }
  const bool restarted = std::any_of(config.restart_epochs.begin(), config.restart_epochs.end(),
                                     [&](std::size_t r) { return r <= epoch; });
  std::size_t decays = 0;
  for (std::size_t d : config.decay_epochs) {
    if (d <= epoch && (!restarted || d > restart)) ++decays;
  }
  return config.lr / std::pow(config.decay_factor, static_cast<double>(decays));
}

void nesterov_step(Tensor& value, const Tensor& grad, Tensor& velocity, double lr,
                   const OptimizerConfig& config, bool decay) {
  if (grad.shape() != value.shape() || velocity.shape() != value.shape()) {
    throw DimensionError("nesterov_step: value, grad and velocity shapes differ");
  }
  const double wd = decay ? config.weight_decay : 0.0;
  const double m = config.momentum;
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i] + wd * value[i];
    velocity[i] = m * velocity[i] + g;
    value[i] -= lr * (g + m * velocity[i]);
  }
}

void NesterovSgd::step(const std::vector<NamedParameter>& params, double lr) {
  for (const auto& np : params) {
    if (!np.param->trainable) continue;
    auto it = velocity_.find(np.name);
    if (it == velocity_.end()) {
      it = velocity_.emplace(np.name, Tensor(np.param->value.shape())).first;
    }
    nesterov_step(np.param->value, np.param->grad, it->second, lr, config_, np.param->decay);
  }
}

namespace {

Tensor slice_frames(const Tensor& batch, std::size_t start, std::size_t len) {
  const Shape& s = batch.shape();
  const std::size_t outer = s[0] * s[1] * s[2];
  const std::size_t t = s[3], v = s[4];
  Tensor out({s[0], s[1], s[2], len, v});
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(batch.data().begin() + static_cast<std::ptrdiff_t>((o * t + start) * v), len * v,
                out.data().begin() + static_cast<std::ptrdiff_t>(o * len * v));
  }
  return out;
}

}  // namespace

WindowedPass windowed_pass(Network& net, const Tensor& batch,
                           const std::vector<std::size_t>& labels, std::size_t window_len,
                           Mode mode, bool backprop, bool detach_feedback, bool commit_stats) {
  if (batch.rank() != 5) throw DimensionError("windowed_pass expects [N, M, C, T, V]");
  const std::size_t n = batch.dim(0);
  const std::size_t frames = batch.dim(3);
  if (labels.size() != n) throw DimensionError("one label per sample required");
  const std::size_t w = window_len == 0 ? frames : window_len;
  if (w > frames || frames % w != 0) {
    throw ConfigError("window length " + std::to_string(w) + " does not divide clip length " +
                      std::to_string(frames));
  }
  const std::size_t windows = frames / w;
  const bool fb_net = net.has_feedback();
  const std::size_t classes = net.config.num_classes;

  std::vector<ForwardTrace> traces(windows);
  std::vector<CompressCache> compress(windows);
  Tensor fb;
  Tensor consensus({n, classes});
  for (std::size_t k = 0; k < windows; ++k) {
    const Tensor window = slice_frames(batch, k * w, w);
    ForwardResult r = forward(net, window, k > 0 && fb_net ? &fb : nullptr, mode, &traces[k]);
    consensus += r.logits;
    if (fb_net && k + 1 < windows) fb = compress_batch(r.features, *net.feedback.compressor, &compress[k]);
  }
  consensus *= 1.0 / static_cast<double>(windows);

  WindowedPass pass;
  Tensor d_consensus({n, classes});
  for (std::size_t s = 0; s < n; ++s) {
    Tensor row({classes});
    std::copy_n(consensus.data().begin() + static_cast<std::ptrdiff_t>(s * classes), classes,
                row.data().begin());
    LossResult lr = cross_entropy_loss(row, labels[s]);
    pass.loss += lr.loss / static_cast<double>(n);
    for (std::size_t c = 0; c < classes; ++c) d_consensus[s * classes + c] = lr.grad[c] / double(n);
    std::size_t best = 0;
    for (std::size_t c = 1; c < classes; ++c) if (row[c] > row[best]) best = c;
    if (best == labels[s]) ++pass.correct;
  }
  pass.consensus = std::move(consensus);

  if (backprop) {
    const Tensor d_logits = d_consensus * (1.0 / static_cast<double>(windows));
    Tensor d_fb_next;  // gradient arriving at the feedback produced by window k
    for (std::size_t k = windows; k-- > 0;) {
      Tensor d_features;
      const Tensor* d_features_ptr = nullptr;
      if (fb_net && k + 1 < windows && !detach_feedback && !d_fb_next.empty()) {
        d_features = compress_backward(*net.feedback.compressor, compress[k], d_fb_next);
        d_features_ptr = &d_features;
      }
      d_fb_next = backward(net, traces[k], d_logits, d_features_ptr);
    }
  }
  if (commit_stats) {
    for (const auto& tr : traces) commit_running_stats(net, tr);
  }
  return pass;
}

std::vector<EpochMetrics> train(Network& net, const std::vector<LabeledClip>& dataset,
                                const OptimizerConfig& opt, const TrainOptions& options,
                                const EpochCallback& on_epoch) {
  if (dataset.empty()) throw DomainError("train: dataset is empty");
  if (options.batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (options.grow && options.grow->attach_epoch < 1) {
    throw ConfigError("grow attach epoch must be >= 1");
  }
  NesterovSgd sgd(opt);
  std::mt19937_64 rng(options.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<EpochMetrics> history;

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.lr = schedule_lr(epoch, opt);
    std::size_t correct = 0;
    std::size_t batches = 0;
    double loss_sum = 0.0;
    const bool grow_now = options.grow && options.grow->attach_epoch == epoch;

    for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
      const std::size_t end = std::min(order.size(), start + options.batch_size);
      std::vector<ClipTensor> clips;
      std::vector<std::size_t> labels;
      for (std::size_t i = start; i < end; ++i) {
        clips.push_back(dataset[order[i]].clip);
        labels.push_back(dataset[order[i]].label);
      }
      const Tensor batch = dynamic_batch(clips, LambdaPolicy{options.lambda});

      if (grow_now && start == 0) {
        metrics.loss_before_attach =
            windowed_pass(net, batch, labels, options.window_len, Mode::Train, false).loss;
        grow_attach(net, options.grow->variant, options.seed ^ 0x9e3779b97f4a7c15ULL);
        metrics.loss_after_attach =
            windowed_pass(net, batch, labels, options.window_len, Mode::Train, false).loss;
      }

      auto params = named_parameters(net);
      for (auto& np : params) np.param->zero_grad();
      const WindowedPass pass = windowed_pass(net, batch, labels, options.window_len, Mode::Train,
                                              true, options.detach_feedback, true);
      if (!std::isfinite(pass.loss)) {
        throw NumericError("training diverged: loss is " + std::to_string(pass.loss) +
                           " at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + " (lr " + std::to_string(metrics.lr) + ")");
      }
      sgd.step(params, metrics.lr);
      loss_sum += pass.loss;
      correct += pass.correct;
      ++batches;
    }
    metrics.loss = loss_sum / static_cast<double>(batches);
    metrics.accuracy = static_cast<double>(correct) / static_cast<double>(dataset.size());
    history.push_back(metrics);
    if (on_epoch) on_epoch(metrics);
  }
  return history;
}

double evaluate_accuracy(const Network& net, const std::vector<LabeledClip>& dataset,
                         std::size_t window_len) {
  if (dataset.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& item : dataset) {
    const std::size_t frames = item.clip.frames();
    WindowConfig cfg;
    cfg.clip_len = frames;
    cfg.window_len = window_len == 0 ? frames : window_len;
    cfg.fps_in = item.clip.fps;
    cfg.mode = net.feedback.variant;
    if (classify_clip(net, item.clip, cfg).predicted_class == item.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(dataset.size());
}

NetworkConfig tiny_network_config(std::uint64_t seed) {
  NetworkConfig config;
  config.in_channels = 2;
  config.num_classes = 3;
  config.blocks = {{4, 1}, {4, 1}};
  config.layout = SkeletonLayout{5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}}, 1};
  config.seed = seed;
  return config;
}

std::vector<GradientCheckEntry> unrolled_gradient_check(Variant variant, std::uint64_t seed,
                                                        std::size_t windows, double h) {
  if (windows == 0) throw DomainError("unrolled_gradient_check needs at least one window");
  Network net(tiny_network_config(seed));
  grow_attach(net, variant, seed + 1);
  std::mt19937_64 rng(seed ^ 0xc0ffeeULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& np : named_parameters(net)) {
    const bool feedback = np.name.rfind("feedback.", 0) == 0;
    const bool importance = np.name.find("edge_importance") != std::string::npos;
    for (double& x : np.param->value.data()) {
      if (feedback) x = 0.5 * normal(rng);
      else if (importance) x += 0.1 * normal(rng);
    }
  }

  const std::size_t n = 2, w = 3;
  Tensor batch({n, 1, 2, windows * w, 5});
  for (double& x : batch.data()) x = normal(rng);
  const std::vector<std::size_t> labels = {0, 2};

  zero_grad(net);
  windowed_pass(net, batch, labels, w, Mode::Train, true);

  std::vector<GradientCheckEntry> report;
  for (auto& np : named_parameters(net)) {
    if (!np.param->trainable) continue;
    Parameter* param = np.param;
    const Tensor analytic = param->grad;
    const Tensor original = param->value;
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& value) {
          param->value = value;
          return windowed_pass(net, batch, labels, w, Mode::Train, false).loss;
        },
        original, h);
    param->value = original;
    report.push_back(
        {np.name, relative_error(analytic, numeric, 1e-8), max_abs_diff(analytic, numeric)});
  }
  return report;
}

}  // namespace rwgcn
