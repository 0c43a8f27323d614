#include <gtest/gtest.h>

#include <cmath>

#include "rwgcn/errors.hpp"
#include "rwgcn/growing.hpp"
#include "rwgcn/noise.hpp"
#include "rwgcn/training.hpp"
#include "test_util.hpp"

namespace rwgcn {
namespace {

using testing::random_tensor;

TEST(CrossEntropy, UniformLogits) {
  const LossResult r = cross_entropy_loss(Tensor({7}, 2.5), 3);
  EXPECT_NEAR(r.loss, std::log(7.0), 1e-14);
  for (std::size_t k = 0; k < 7; ++k) EXPECT_NEAR(r.grad[k], k == 3 ? 1.0 / 7 - 1 : 1.0 / 7, 1e-15);
}

TEST(CrossEntropy, ConfidentCorrectLogitIsStable) {
  const LossResult r = cross_entropy_loss(Tensor::from_values({0, 1000, 0}), 1);
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(cross_entropy_loss(Tensor::from_values({0, 1000, 0}), 0).loss));
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  const Tensor logits = random_tensor({5}, 3, 2.0);
  const LossResult r = cross_entropy_loss(logits, 2);
  for (std::size_t k = 0; k < 5; ++k) {
    Tensor plus = logits, minus = logits;
    plus[k] += 1e-6;
    minus[k] -= 1e-6;
    const double fd =
        (cross_entropy_loss(plus, 2).loss - cross_entropy_loss(minus, 2).loss) / 2e-6;
    EXPECT_NEAR(r.grad[k], fd, 1e-6);
  }
}

TEST(CrossEntropy, LabelOutOfRange) {
  EXPECT_THROW(cross_entropy_loss(Tensor({3}), 3), DomainError);
}

TEST(Nesterov, ZeroMomentumIsPlainSgd) {
  OptimizerConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  Tensor theta = Tensor::from_values({1.0, -2.0}), v({2});
  nesterov_step(theta, Tensor::from_values({0.5, 1.0}), v, 0.1, cfg);
  EXPECT_NEAR(theta[0], 0.95, 1e-15);
  EXPECT_NEAR(theta[1], -2.1, 1e-15);
}

TEST(Nesterov, TwoStepsOnQuadratic) {
  // f = theta^2 / 2, theta0 = 1, lr 0.1, m 0.9.
  // Step 1: g = 1, v = 1, theta = 1 - 0.1 (1 + 0.9) = 0.81.
  // Step 2: g = 0.81, v = 0.9 + 0.81 = 1.71, theta = 0.81 - 0.1 (0.81 + 1.539) = 0.5751.
  OptimizerConfig cfg;
  cfg.weight_decay = 0.0;
  Tensor theta = Tensor::from_values({1.0}), v({1});
  nesterov_step(theta, theta, v, 0.1, cfg);
  EXPECT_NEAR(theta[0], 0.81, 1e-15);
  nesterov_step(theta, theta, v, 0.1, cfg);
  EXPECT_NEAR(v[0], 1.71, 1e-15);
  EXPECT_NEAR(theta[0], 0.5751, 1e-15);
}

TEST(Nesterov, WeightDecayOnlyWhereEnabled) {
  OptimizerConfig cfg;
  cfg.weight_decay = 1e-2;
  const double lr = 0.5;
  Tensor a = Tensor::from_values({2.0}), va({1});
  nesterov_step(a, Tensor({1}), va, lr, cfg, true);
  EXPECT_NEAR(a[0], 2.0 * (1 - lr * cfg.weight_decay * (1 + cfg.momentum)), 1e-15);
  Tensor b = Tensor::from_values({2.0}), vb({1});
  nesterov_step(b, Tensor({1}), vb, lr, cfg, false);
  EXPECT_EQ(b[0], 2.0);
}

TEST(Nesterov, OptimizerSkipsFrozenAndHonoursDecayFlags) {
  Parameter w(Tensor::from_values({1.0}), true, true);
  Parameter g(Tensor::from_values({1.0}), true, false);
  Parameter frozen(Tensor::from_values({1.0}), false, true);
  OptimizerConfig cfg;
  cfg.weight_decay = 0.1;
  NesterovSgd opt(cfg);
  opt.step({{"w", &w}, {"g", &g}, {"frozen", &frozen}}, 1.0);
  EXPECT_LT(w.value[0], 1.0);
  EXPECT_EQ(g.value[0], 1.0);
  EXPECT_EQ(frozen.value[0], 1.0);
}

TEST(Nesterov, BatchNormAffineAndGatesAreNotDecayed) {
  Network net(tiny_network_config(1));
  grow_attach(net, Variant::SemanticControl);
  for (const auto& np : named_parameters(net)) {
    const std::string leaf = np.name.substr(np.name.rfind('.') + 1);
    if (leaf == "gamma" || leaf == "beta" || leaf.ends_with("gate"))
      EXPECT_FALSE(np.param->decay) << np.name;
    if (leaf == "weight") EXPECT_TRUE(np.param->decay) << np.name;
  }
}

TEST(OptimizerConfig, Validation) {
  OptimizerConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.weight_decay = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = OptimizerConfig{};
  c.decay_factor = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Schedule, StepDecayAndRestart) {
  OptimizerConfig c;
  c.lr = 0.01;
  c.decay_epochs = {30, 60};
  EXPECT_DOUBLE_EQ(schedule_lr(0, c), 0.01);
  EXPECT_DOUBLE_EQ(schedule_lr(29, c), 0.01);
  EXPECT_DOUBLE_EQ(schedule_lr(30, c), 0.001);
  EXPECT_DOUBLE_EQ(schedule_lr(59, c), 0.001);
  EXPECT_DOUBLE_EQ(schedule_lr(60, c), 0.0001);
  c.restart_epochs = {40};
  EXPECT_DOUBLE_EQ(schedule_lr(39, c), 0.001);
  EXPECT_DOUBLE_EQ(schedule_lr(40, c), 0.01);
  EXPECT_DOUBLE_EQ(schedule_lr(60, c), 0.001);
}

TEST(Schedule, TrainReportsScheduledRates) {
  Network net(tiny_network_config(2));
  std::vector<LabeledClip> data;
  for (std::size_t i = 0; i < 2; ++i)
    data.push_back({ClipTensor{random_tensor({1, 2, 4, 5}, 10 + i), 30.0}, i});
  OptimizerConfig opt;
  opt.lr = 1e-4;
  opt.decay_epochs = {3, 5};
  TrainOptions options;
  options.epochs = 7;
  options.batch_size = 2;
  const auto metrics = train(net, data, opt, options);
  ASSERT_EQ(metrics.size(), 7u);
  for (const auto& m : metrics) {
    EXPECT_DOUBLE_EQ(m.lr, schedule_lr(m.epoch, opt));
    EXPECT_TRUE(std::isfinite(m.loss));
  }
  EXPECT_DOUBLE_EQ(metrics[6].lr, 1e-6);
}

TEST(ToyDataset, BalancedMirroredAndDirectional) {
  const ToyDataset d = make_toy_dataset(20, 16, 3);
  ASSERT_EQ(d.clips.size(), 20u);
  ASSERT_EQ(d.records.size(), 20u);
  EXPECT_EQ(d.manifest.clips.size(), 20u);
  EXPECT_EQ(d.manifest.class_names.size(), 2u);
  std::size_t ones = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    const auto& c = d.clips[i];
    EXPECT_EQ(c.clip.data.shape(), (Shape{1, 2, 16, 18}));
    EXPECT_EQ(c.label, i % 2);
    ones += c.label;
    const double vx = mean_x_velocity(c.clip);
    if (c.label == 0) EXPECT_GT(vx, 0.0);
    if (c.label == 1) EXPECT_LT(vx, 0.0);
  }
  EXPECT_EQ(ones, 10u);
  for (std::size_t i = 0; i < 20; i += 2)
    for (std::size_t t = 0; t < 16; ++t)
      for (std::size_t v = 0; v < 18; ++v) {
        EXPECT_EQ(d.clips[i + 1].clip.at(0, 0, t, v), -d.clips[i].clip.at(0, 0, t, v));
        EXPECT_EQ(d.clips[i + 1].clip.at(0, 1, t, v), d.clips[i].clip.at(0, 1, t, v));
      }
  EXPECT_EQ(make_toy_dataset(20, 16, 3).records, d.records);
  EXPECT_THROW(make_toy_dataset(0, 16, 1), DomainError);
  EXPECT_THROW(make_toy_dataset(4, 4, 1), DomainError);
}

std::vector<LabeledClip> small_dataset(std::uint64_t seed) {
  const ToyDataset d = make_toy_dataset(8, 8, seed);
  std::vector<LabeledClip> out;
  const std::size_t v = tiny_network_config(0).layout.num_joints;
  for (const auto& c : d.clips) {
    LabeledClip lc{ClipTensor{Tensor({1, 2, c.clip.frames(), v}), c.clip.fps}, c.label};
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t t = 0; t < c.clip.frames(); ++t)
        for (std::size_t j = 0; j < v; ++j) lc.clip.at(0, ch, t, j) = c.clip.at(0, ch, t, j);
    out.push_back(lc);
  }
  return out;
}

Tensor stack(const std::vector<LabeledClip>& data, std::vector<std::size_t>& labels) {
  std::vector<ClipTensor> clips;
  for (const auto& c : data) {
    clips.push_back(c.clip);
    labels.push_back(c.label);
  }
  return dynamic_batch(clips, LambdaPolicy{1});
}

TEST(Training, SmallStepDecreasesLoss) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Network net(tiny_network_config(seed));
    if (seed % 2) grow_attach(net, Variant::SemanticControl, seed);
    std::vector<std::size_t> labels;
    const Tensor batch = stack(small_dataset(seed + 100), labels);
    zero_grad(net);
    const double before = windowed_pass(net, batch, labels, 4, Mode::Train, true).loss;
    OptimizerConfig cfg;
    cfg.momentum = 0.0;
    cfg.weight_decay = 0.0;
    NesterovSgd opt(cfg);
    opt.step(named_parameters(net), 1e-3);
    const double after = windowed_pass(net, batch, labels, 4, Mode::Train, false).loss;
    EXPECT_LT(after, before) << "seed " << seed;
  }
}

TEST(Training, WindowedPassIsPureWithoutCommit) {
  Network net(tiny_network_config(4));
  std::vector<std::size_t> labels;
  const Tensor batch = stack(small_dataset(5), labels);
  std::vector<Tensor> stats;
  for (auto& b : named_buffers(net)) stats.push_back(*b.tensor);
  windowed_pass(net, batch, labels, 4, Mode::Train, true);
  auto buffers = named_buffers(net);
  for (std::size_t i = 0; i < buffers.size(); ++i) EXPECT_EQ(*buffers[i].tensor, stats[i]);
  windowed_pass(net, batch, labels, 4, Mode::Train, false, false, true);
  bool changed = false;
  for (std::size_t i = 0; i < buffers.size(); ++i) changed = changed || *buffers[i].tensor != stats[i];
  EXPECT_TRUE(changed);
}

TEST(Training, GrowAttachKeepsLossContinuous) {
  Network net(tiny_network_config(6));
  OptimizerConfig opt;
  opt.lr = 0.01;
  TrainOptions options;
  options.epochs = 3;
  options.batch_size = 4;
  options.window_len = 4;
  options.grow = GrowPlan{1, Variant::SemanticControl};
  const auto metrics = train(net, small_dataset(7), opt, options);
  EXPECT_FALSE(metrics[0].loss_before_attach);
  ASSERT_TRUE(metrics[1].loss_before_attach);
  ASSERT_TRUE(metrics[1].loss_after_attach);
  EXPECT_NEAR(*metrics[1].loss_after_attach, *metrics[1].loss_before_attach, 1e-12);
  EXPECT_EQ(net.feedback.variant, Variant::SemanticControl);
}

TEST(Training, DeterministicForSeed) {
  auto run = [] {
    Network net(tiny_network_config(8));
    TrainOptions options;
    options.epochs = 2;
    options.batch_size = 3;
    options.window_len = 4;
    options.grow = GrowPlan{1, Variant::Semantic};
    const auto m = train(net, small_dataset(9), OptimizerConfig{}, options);
    return std::make_pair(m.back().loss, network_forward(net, small_dataset(9)[0].clip.data).logits);
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Training, RejectsBadInput) {
  Network net(tiny_network_config(10));
  TrainOptions options;
  EXPECT_THROW(train(net, {}, OptimizerConfig{}, options), DomainError);
  options.batch_size = 0;
  EXPECT_THROW(train(net, small_dataset(1), OptimizerConfig{}, options), ConfigError);
}

class UnrolledGradient : public ::testing::TestWithParam<Variant> {};

TEST_P(UnrolledGradient, MatchesCentralDifferences) {
  for (const auto& e : unrolled_gradient_check(GetParam(), 11)) {
    EXPECT_LT(e.rel_error, 1e-3) << e.name << " max abs " << e.max_abs_error;
  }
}

INSTANTIATE_TEST_SUITE_P(AllVariants, UnrolledGradient,
                         ::testing::Values(Variant::Consensus, Variant::Semantic, Variant::Control,
                                           Variant::SemanticControl),
                         [](const auto& info) {
                           switch (info.param) {
                             case Variant::Consensus: return std::string("Consensus");
                             case Variant::Semantic: return std::string("Semantic");
                             case Variant::Control: return std::string("Control");
                             default: return std::string("SemanticControl");
                           }
                         });

}  // namespace
}  // namespace rwgcn
