#include <gtest/gtest.h>

#include <memory>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "rwgcn/checkpoint.hpp"
#include "rwgcn/errors.hpp"
#include "rwgcn/gradcheck.hpp"
#include "rwgcn/network.hpp"
#include "test_util.hpp"

namespace rwgcn {
namespace {

using testing::dot;
using testing::random_tensor;

std::shared_ptr<const PartitionedAdjacency> coco_adjacency() {
  return std::make_shared<const PartitionedAdjacency>(
      build_partitioned_adjacency(build_coco18_layout()));
}

// Y[c, t, w] = sum_p sum_v sum_i (W_p[c, i] X[i, t, v] + b_p[c]) * A_p[v, w]
Tensor naive_gcn(const GcnLayer& layer, const Tensor& x) {
  const Tensor a = layer.effective_adjacency();
  const std::size_t p_count = a.dim(0), v_count = a.dim(1);
  const std::size_t cin = x.dim(0), t_count = x.dim(1);
  const std::size_t cout = layer.out_channels();
  Tensor y({cout, t_count, v_count});
  for (std::size_t p = 0; p < p_count; ++p)
    for (std::size_t c = 0; c < cout; ++c)
      for (std::size_t t = 0; t < t_count; ++t)
        for (std::size_t w = 0; w < v_count; ++w) {
          double s = 0.0;
          for (std::size_t v = 0; v < v_count; ++v) {
            double proj = layer.bias.value[p * cout + c];
            for (std::size_t i = 0; i < cin; ++i) {
              proj += layer.weight.value.at({p * cout + c, i, 0, 0}) * x.at({i, t, v});
            }
            s += proj * a.at({p, v, w});
          }
          y.at({c, t, w}) += s;
        }
  return y;
}

// Sum over the module's own layers, written out per layer.
std::size_t analytic_parameter_count(const NetworkConfig& cfg) {
  const std::size_t v = cfg.layout.num_joints, p = kNumPartitions;
  std::size_t total = 2 * cfg.in_channels * v;  // data_bn
  std::size_t in = cfg.in_channels;
  for (std::size_t i = 0; i < cfg.blocks.size(); ++i) {
    const std::size_t out = cfg.blocks[i].out_channels, stride = cfg.blocks[i].stride;
    total += p * out * in + p * out;             // gcn weight + bias
    if (cfg.edge_importance) total += p * v * v;  // edge importance
    total += 2 * out;                             // gcn bn
    total += out * out * 9 + out + 2 * out;       // tcn conv + bn
    if (i > 0 && (in != out || stride != 1)) total += out * in + out + 2 * out;
    in = out;
  }
  return total + in * cfg.num_classes + cfg.num_classes;
}

NetworkConfig small_config(std::uint64_t seed = 3) {
  NetworkConfig cfg;
  cfg.num_classes = 5;
  cfg.blocks = {{6, 1}, {6, 1}, {8, 2}};
  cfg.seed = seed;
  return cfg;
}

TEST(Gcn, IdentityCase) {
  auto adj = std::make_shared<PartitionedAdjacency>();
  adj->matrices = Tensor({1, 4, 4});
  for (std::size_t i = 0; i < 4; ++i) adj->matrices.at({0, i, i}) = 1.0;
  std::mt19937_64 rng(1);
  GcnLayer layer(3, 3, adj, false, rng);
  layer.weight.value.fill(0.0);
  for (std::size_t i = 0; i < 3; ++i) layer.weight.value.at({i, i, 0, 0}) = 1.0;
  layer.bias.value.fill(0.0);
  const Tensor x = random_tensor({3, 5, 4}, 2);
  EXPECT_EQ(gcn_forward(layer, x), x);

  adj->matrices.fill(0.0);
  EXPECT_EQ(gcn_forward(layer, x).max_abs(), 0.0);
}

TEST(Gcn, MatchesNaiveTripleLoop) {
  std::mt19937_64 rng(3);
  GcnLayer layer(2, 4, coco_adjacency(), true, rng);
  layer.bias.value = random_tensor(layer.bias.value.shape(), 4);
  layer.edge_importance->value = random_tensor({3, 18, 18}, 5) + Tensor({3, 18, 18}, 1.0);
  const Tensor x = random_tensor({2, 4, 18}, 6);
  EXPECT_LT(max_abs_diff(gcn_forward(layer, x), naive_gcn(layer, x)), 1e-10);
}

TEST(Gcn, OnesMaskIsNeutral) {
  std::mt19937_64 rng(7), rng2(7);
  GcnLayer masked(2, 3, coco_adjacency(), true, rng);
  GcnLayer plain(2, 3, coco_adjacency(), false, rng2);
  const Tensor x = random_tensor({2, 3, 18}, 8);
  EXPECT_EQ(gcn_forward(masked, x), gcn_forward(plain, x));
}

TEST(Gcn, JointMismatchThrows) {
  std::mt19937_64 rng(9);
  GcnLayer layer(2, 3, coco_adjacency(), true, rng);
  EXPECT_THROW(gcn_forward(layer, Tensor({2, 3, 17})), DimensionError);
}

TEST(Gcn, LinearInInputWithoutBias) {
  std::mt19937_64 rng(10);
  GcnLayer layer(2, 3, coco_adjacency(), true, rng);
  layer.bias.value.fill(0.0);
  const Tensor x = random_tensor({2, 3, 18}, 11);
  EXPECT_LT(max_abs_diff(gcn_forward(layer, 2.5 * x), 2.5 * gcn_forward(layer, x)), 1e-12);
}

class GcnGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(GcnGradient, MatchesFiniteDifferences) {
  const std::uint64_t seed = GetParam();
  std::mt19937_64 rng(seed);
  GcnLayer layer(2, 3, coco_adjacency(), true, rng);
  layer.bias.value = random_tensor(layer.bias.value.shape(), seed + 1);
  layer.edge_importance->value = random_tensor({3, 18, 18}, seed + 2, 0.3) + Tensor({3, 18, 18}, 1.0);
  const Tensor x = random_tensor({2, 2, 3, 18}, seed + 3);
  const Tensor probe = random_tensor({2, 3, 3, 18}, seed + 4);
  GcnCache cache;
  gcn_forward(layer, x, &cache);
  layer.weight.zero_grad();
  layer.bias.zero_grad();
  layer.edge_importance->zero_grad();
  const Tensor dx = gcn_backward(layer, cache, probe);
  auto loss_with = [&](Parameter& p) {
    return [&](const Tensor& v) {
      const Tensor saved = p.value;
      p.value = v;
      const double r = dot(gcn_forward(layer, x), probe);
      p.value = saved;
      return r;
    };
  };
  EXPECT_LT(relative_error(dx, finite_diff_grad(
                [&](const Tensor& v) { return dot(gcn_forward(layer, v), probe); }, x)),
            1e-4);
  EXPECT_LT(relative_error(layer.weight.grad,
                           finite_diff_grad(loss_with(layer.weight), layer.weight.value)),
            1e-4);
  EXPECT_LT(relative_error(layer.bias.grad, finite_diff_grad(loss_with(layer.bias), layer.bias.value)),
            1e-4);
  EXPECT_LT(relative_error(layer.edge_importance->grad,
                           finite_diff_grad(loss_with(*layer.edge_importance),
                                            layer.edge_importance->value)),
            1e-4);
}

INSTANTIATE_TEST_SUITE_P(Seeds, GcnGradient, ::testing::Range<std::uint64_t>(0, 20));

TEST(Block, TemporalLength) {
  EXPECT_EQ(block_output_length(30, 1), 30u);
  EXPECT_EQ(block_output_length(30, 2), 15u);
  EXPECT_EQ(block_output_length(31, 2), 16u);
  EXPECT_EQ(block_output_length(block_output_length(300, 2), 2), 75u);
  std::mt19937_64 rng(12);
  const StGcnBlock b = make_block(2, 4, 2, false, coco_adjacency(), true, rng);
  EXPECT_EQ(block_forward(b, random_tensor({2, 30, 18}, 13), Mode::Eval).shape(),
            (Shape{4, 15, 18}));
}

TEST(Block, ResidualRule) {
  std::mt19937_64 rng(14);
  auto adj = coco_adjacency();
  EXPECT_EQ(make_block(2, 4, 1, true, adj, true, rng).residual, ResidualKind::None);
  EXPECT_EQ(make_block(4, 4, 1, false, adj, true, rng).residual, ResidualKind::Identity);
  EXPECT_EQ(make_block(4, 8, 1, false, adj, true, rng).residual, ResidualKind::Projection);
  EXPECT_EQ(make_block(4, 4, 2, false, adj, true, rng).residual, ResidualKind::Projection);
}

TEST(Block, ZeroTcnGammaLeavesResidualPath) {
  std::mt19937_64 rng(15);
  auto adj = coco_adjacency();
  StGcnBlock identity = make_block(4, 4, 1, false, adj, true, rng);
  identity.tcn.bn.gamma.value.fill(0.0);
  const Tensor x = random_tensor({4, 6, 18}, 16);
  EXPECT_EQ(block_forward(identity, x, Mode::Eval), relu(x));

  StGcnBlock projection = make_block(4, 6, 2, false, adj, true, rng);
  projection.tcn.bn.gamma.value.fill(0.0);
  const ResidualProjection& r = *projection.projection;
  const Tensor res = batchnorm_forward(
      conv2d(x, r.weight.value, &r.bias.value, {{2, 1}, {0, 0}}), r.bn, Mode::Eval,
      BatchNormLayout::ChannelFirst);
  EXPECT_LT(max_abs_diff(block_forward(projection, x, Mode::Eval), relu(res)), 1e-15);

  StGcnBlock first = make_block(2, 4, 1, true, adj, true, rng);
  first.tcn.bn.gamma.value.fill(0.0);
  EXPECT_EQ(block_forward(first, Tensor({2, 6, 18}), Mode::Eval).max_abs(), 0.0);
}

class BlockGradient : public ::testing::TestWithParam<std::uint64_t> {};

TEST_P(BlockGradient, MatchesFiniteDifferences) {
  const std::uint64_t seed = GetParam();
  const SkeletonLayout layout{5, {{0, 1}, {1, 2}, {1, 3}, {3, 4}}, 1};
  auto adj = std::make_shared<const PartitionedAdjacency>(build_partitioned_adjacency(layout));
  struct Case { std::size_t in, out, stride; bool first; };
  for (const Case c : {Case{2, 3, 1, true}, Case{3, 3, 1, false}, Case{3, 4, 2, false}}) {
    std::mt19937_64 rng(seed);
    StGcnBlock block = make_block(c.in, c.out, c.stride, c.first, adj, true, rng);
    const Tensor x = random_tensor({2, c.in, 5, 5}, seed + 100);
    BlockCache cache;
    const Tensor y = block_forward(block, x, Mode::Train, &cache);
    const Tensor probe = random_tensor(y.shape(), seed + 200);
    const Tensor dx = block_backward(block, cache, probe);
    EXPECT_LT(relative_error(dx, finite_diff_grad(
                  [&](const Tensor& v) { return dot(block_forward(block, v, Mode::Train), probe); },
                  x)),
              1e-4);
    auto check = [&](Parameter& p, const char* name) {
      const Tensor numeric = finite_diff_grad(
          [&](const Tensor& v) {
            const Tensor saved = p.value;
            p.value = v;
            const double r = dot(block_forward(block, x, Mode::Train), probe);
            p.value = saved;
            return r;
          },
          p.value);
      EXPECT_LT(relative_error(p.grad, numeric, 1e-8), 1e-4) << name;
    };
    check(block.gcn.weight, "gcn.weight");
    check(*block.gcn.edge_importance, "gcn.edge_importance");
    check(block.gcn_bn.gamma, "gcn_bn.gamma");
    check(block.tcn.weight, "tcn.weight");
    check(block.tcn.bn.gamma, "tcn.bn.gamma");
    check(block.tcn.bn.beta, "tcn.bn.beta");
    if (block.projection) {
      check(block.projection->weight, "res.weight");
      check(block.projection->bn.gamma, "res.bn.gamma");
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, BlockGradient, ::testing::Range<std::uint64_t>(0, 20));

TEST(Network, StandardPlan) {
  const auto plan = standard_block_plan();
  ASSERT_EQ(plan.size(), 12u);
  const std::vector<std::size_t> channels = {64, 64, 64, 64, 128, 128, 128, 128, 256, 256, 256, 256};
  const std::vector<std::size_t> strides = {1, 1, 1, 1, 2, 1, 1, 1, 2, 1, 1, 1};
  for (std::size_t i = 0; i < 12; ++i) {
    EXPECT_EQ(plan[i].out_channels, channels[i]);
    EXPECT_EQ(plan[i].stride, strides[i]);
  }
  EXPECT_EQ(NetworkConfig{}.min_frames(), 4u);
}

TEST(Network, ParameterCountMatchesAnalyticSum) {
  Network net{NetworkConfig{}};
  EXPECT_EQ(count_parameters(net), analytic_parameter_count(net.config));
  EXPECT_EQ(count_parameters(net), 4093008u);
  std::size_t fc = 0, first_gcn = 0;
  for (const auto& item : itemize_parameters(net)) {
    if (item.name == "fc.weight" || item.name == "fc.bias") fc += item.count;
    if (item.name == "blocks.0.gcn.weight") first_gcn = item.count;
  }
  EXPECT_EQ(fc, 30840u);
  EXPECT_EQ(first_gcn, 384u);

  NetworkConfig frozen;
  frozen.edge_importance_trainable = false;
  Network f(frozen);
  EXPECT_EQ(count_parameters(f), 4093008u - 12u * 972u);
  NetworkConfig compact = small_config();
  Network c(compact);
  EXPECT_EQ(count_parameters(c), analytic_parameter_count(compact));
}

TEST(Network, OutputShapes) {
  Network net(small_config());
  const NetworkOutput out = network_forward(net, random_tensor({1, 2, 12, 18}, 20));
  EXPECT_EQ(out.logits.shape(), (Shape{5}));
  EXPECT_EQ(out.features.shape(), (Shape{8, 6, 18}));
  EXPECT_THROW(network_forward(net, Tensor({1, 2, 1, 18})), DimensionError);
  EXPECT_THROW(network_forward(net, Tensor({1, 3, 4, 18})), DimensionError);
  Network standard{NetworkConfig{}};
  EXPECT_THROW(network_forward(standard, Tensor({1, 2, 3, 18})), DimensionError);
}

TEST(Network, DuplicatedPersonMatchesSinglePerson) {
  Network net(small_config());
  const Tensor one = random_tensor({1, 2, 8, 18}, 21);
  Tensor two({2, 2, 8, 18});
  std::copy(one.data().begin(), one.data().end(), two.data().begin());
  std::copy(one.data().begin(), one.data().end(), two.data().begin() + one.size());
  EXPECT_LT(max_abs_diff(network_forward(net, one).logits, network_forward(net, two).logits), 1e-12);
}

TEST(Network, MatchesCompositionOfSubOps) {
  Network net(small_config(22));
  net.data_bn.running_mean = random_tensor({36}, 23, 0.1);
  const Tensor clip = random_tensor({2, 2, 8, 18}, 24);
  const std::size_t m = 2, c = 2, t = 8, v = 18;

  // data_bn over channel c * V + v
  Tensor x({m, c, t, v});
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t f = 0; f < t; ++f)
        for (std::size_t j = 0; j < v; ++j) {
          const std::size_t k = ch * v + j;
          x.at({p, ch, f, j}) = net.data_bn.gamma.value[k] *
                                    (clip.at({p, ch, f, j}) - net.data_bn.running_mean[k]) /
                                    std::sqrt(net.data_bn.running_var[k] + net.data_bn.eps) +
                                net.data_bn.beta.value[k];
        }
  for (const auto& block : net.blocks) x = block_forward(block, x, Mode::Eval);
  const Tensor per_person = global_avg_pool(x);
  Tensor pooled({1, per_person.dim(1)});
  for (std::size_t k = 0; k < per_person.dim(1); ++k) {
    pooled[k] = 0.5 * (per_person.at({0, k}) + per_person.at({1, k}));
  }
  const Tensor logits = linear(pooled, net.fc_weight.value, &net.fc_bias.value);

  const NetworkOutput out = network_forward(net, clip);
  EXPECT_LT(max_abs_diff(out.logits, logits.reshaped({5})), 1e-12);
  Tensor person0({x.dim(1), x.dim(2), v});
  std::copy_n(x.data().begin(), person0.size(), person0.data().begin());
  EXPECT_LT(max_abs_diff(out.features, person0), 1e-12);
}

TEST(Network, PermutationEquivariance) {
  NetworkConfig cfg = small_config(25);
  std::vector<std::size_t> perm(18);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(26);
  std::shuffle(perm.begin(), perm.end(), rng);
  NetworkConfig permuted = cfg;
  for (auto& [a, b] : permuted.layout.edges) {
    a = perm[a];
    b = perm[b];
  }
  permuted.layout.center_joint = perm[cfg.layout.center_joint];
  Network net(cfg), pnet(permuted);
  const Tensor clip = random_tensor({1, 2, 8, 18}, 27);
  Tensor pclip(clip.shape());
  for (std::size_t ch = 0; ch < 2; ++ch)
    for (std::size_t f = 0; f < 8; ++f)
      for (std::size_t j = 0; j < 18; ++j) pclip.at({0, ch, f, perm[j]}) = clip.at({0, ch, f, j});
  EXPECT_LT(max_abs_diff(network_forward(net, clip).logits, network_forward(pnet, pclip).logits),
            1e-9);
}

TEST(Network, InputScalingPropagatesThroughDataNorm) {
  Network net(small_config());
  const Tensor clip = random_tensor({2, 2, 8, 18}, 28);
  ForwardTrace a, b;
  forward(net, clip.reshaped({1, 2, 2, 8, 18}), nullptr, Mode::Eval, &a);
  forward(net, (3.0 * clip).reshaped({1, 2, 2, 8, 18}), nullptr, Mode::Eval, &b);
  // With identity running statistics the first block's gcn input scales exactly.
  EXPECT_LT(max_abs_diff(b.blocks[0].gcn.input, 3.0 * a.blocks[0].gcn.input), 1e-12);
}

TEST(Network, ForwardIsPure) {
  Network net(small_config());
  const Tensor batch = random_tensor({2, 1, 2, 8, 18}, 29);
  const auto before = checkpoint_bytes(net);
  const ForwardResult r1 = forward(net, batch, nullptr, Mode::Train);
  const ForwardResult r2 = forward(net, batch, nullptr, Mode::Train);
  EXPECT_EQ(r1.logits, r2.logits);
  EXPECT_EQ(checkpoint_bytes(net), before);
  EXPECT_EQ(network_forward(net, batch.reshaped({2, 2, 8, 18})).logits,
            network_forward(net, batch.reshaped({2, 2, 8, 18})).logits);
}

TEST(Network, BackwardMatchesFiniteDifferences) {
  NetworkConfig cfg;
  cfg.num_classes = 3;
  cfg.blocks = {{3, 1}, {3, 2}};
  cfg.layout = SkeletonLayout{3, {{0, 1}, {1, 2}}, 1};
  cfg.seed = 30;
  Network net(cfg);
  const Tensor batch = random_tensor({2, 1, 2, 2, 3}, 31);
  const Tensor probe = random_tensor({2, 3}, 32);
  ForwardTrace trace;
  forward(net, batch, nullptr, Mode::Train, &trace);
  zero_grad(net);
  backward(net, trace, probe, nullptr);
  for (auto& np : named_parameters(net)) {
    const Tensor numeric = finite_diff_grad(
        [&](const Tensor& v) {
          const Tensor saved = np.param->value;
          np.param->value = v;
          const double r = dot(forward(net, batch, nullptr, Mode::Train).logits, probe);
          np.param->value = saved;
          return r;
        },
        np.param->value);
    EXPECT_LT(relative_error(np.param->grad, numeric, 1e-8), 1e-4) << np.name;
  }
}

}  // namespace
}  // namespace rwgcn
