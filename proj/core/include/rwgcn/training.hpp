#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rwgcn/clip.hpp"
#include "rwgcn/clip_io.hpp"
#include "rwgcn/network.hpp"

namespace rwgcn {

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits
};

/// -log softmax(logits)[label], gradient softmax(logits) - one_hot(label).
/// Throws DomainError when the label is out of range.
LossResult cross_entropy_loss(const Tensor& logits, std::size_t label);

struct OptimizerConfig {
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double decay_factor = 10.0;  // lr is divided by this at each decay epoch
  std::vector<std::size_t> decay_epochs;
  std::vector<std::size_t> restart_epochs;

  void validate() const;
};

/// base / decay_factor^k, where k counts decay epochs <= epoch that come
/// after the latest restart epoch <= epoch.
double schedule_lr(std::size_t epoch, const OptimizerConfig& config);

/// Nesterov momentum in the lookahead-folded form:
///   g' = g + wd * theta   (wd only for parameters with decay enabled)
///   v  = m * v + g'
///   theta -= lr * (g' + m * v)
/// Velocities are keyed by parameter name and created on first use.
class NesterovSgd {
 public:
  explicit NesterovSgd(OptimizerConfig config) : config_(std::move(config)) { config_.validate(); }

  const OptimizerConfig& config() const { return config_; }
  void step(const std::vector<NamedParameter>& params, double lr);

 private:
  OptimizerConfig config_;
  std::map<std::string, Tensor> velocity_;
};

/// Single-tensor update with an explicit velocity; `decay` selects whether
/// weight decay applies.
void nesterov_step(Tensor& value, const Tensor& grad, Tensor& velocity, double lr,
                   const OptimizerConfig& config, bool decay = true);

struct GrowPlan {
  std::size_t attach_epoch = 1;
  Variant variant = Variant::Semantic;
};

struct LabeledClip {
  ClipTensor clip;
  std::size_t label = 0;
};

struct WindowedPass {
  double loss = 0.0;       // mean cross entropy of the final consensus logits
  Tensor consensus;        // [N, K]
  std::size_t correct = 0;
};

/// Runs a batch [N, M, C, T, V] as T / window_len windows with feedback
/// threaded between windows, and scores the final consensus logits. With
/// `backprop`, gradients are accumulated through the unrolled window
/// sequence (into the feedback path too unless `detach_feedback`). Running
/// statistics are committed only when `commit_stats` is set.
WindowedPass windowed_pass(Network& net, const Tensor& batch,
                           const std::vector<std::size_t>& labels, std::size_t window_len,
                           Mode mode, bool backprop, bool detach_feedback = false,
                           bool commit_stats = false);

struct TrainOptions {
  std::size_t epochs = 10;
  std::size_t batch_size = 8;
  std::size_t window_len = 0;  // 0 = whole clip
  std::size_t lambda = 1;
  std::uint64_t seed = 1;
  bool detach_feedback = false;
  std::optional<GrowPlan> grow;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;      // mean over batches
  double accuracy = 0.0;  // train-mode predictions
  // Loss on the epoch's first batch just before and just after grow_attach.
  std::optional<double> loss_before_attach;
  std::optional<double> loss_after_attach;
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

/// Epochs are numbered from 0. Throws NumericError when the loss diverges.
std::vector<EpochMetrics> train(Network& net, const std::vector<LabeledClip>& dataset,
                                const OptimizerConfig& opt, const TrainOptions& options,
                                const EpochCallback& on_epoch = {});

/// Train-mode-free accuracy of the final consensus prediction (eval mode).
double evaluate_accuracy(const Network& net, const std::vector<LabeledClip>& dataset,
                         std::size_t window_len);

/// Tiny two-block network (2 -> 4 -> 4 channels, 5-joint tree, 3 classes)
/// used for end-to-end gradient checks.
NetworkConfig tiny_network_config(std::uint64_t seed);

struct GradientCheckEntry {
  std::string name;
  double rel_error = 0.0;  // norm-wise, see relative_error
  double max_abs_error = 0.0;
};

/// Compares windowed_pass gradients (train mode, feedback threaded across
/// `windows` windows) with central differences for every trainable
/// parameter of a tiny network grown to `variant`, with feedback gates and
/// weights perturbed away from their zero initialization. Gradients whose
/// norms are both below 1e-8 (biases feeding a train-mode batch norm) count
/// as agreeing.
std::vector<GradientCheckEntry> unrolled_gradient_check(Variant variant, std::uint64_t seed,
                                                        std::size_t windows = 3,
                                                        double h = 1e-5);

struct ToyDataset {
  DatasetManifest manifest;
  std::vector<ClipRecord> records;
  std::vector<LabeledClip> clips;
};

/// Two classes of single-person skeleton clips: 0 translates left to right,
/// 1 right to left, with small coordinate jitter. Samples come in mirrored
/// pairs (odd index = x-negated even index), so an even count is balanced.
/// Deterministic per seed.
ToyDataset make_toy_dataset(std::size_t num_samples, std::size_t frames, std::uint64_t seed);

/// Mean per-frame x displacement over all joints and persons.
double mean_x_velocity(const ClipTensor& clip);

}  // namespace rwgcn
