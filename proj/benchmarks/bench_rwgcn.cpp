#include <benchmark/benchmark.h>

#include <memory>
#include <random>

#include "rwgcn/engine.hpp"
#include "rwgcn/growing.hpp"
#include "rwgcn/network.hpp"
#include "rwgcn/noise.hpp"

namespace rwgcn {
namespace {

Tensor random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = dist(rng);
  return t;
}

NetworkConfig compact_config() {
  NetworkConfig cfg;
  cfg.blocks = compact_block_plan();
  cfg.num_classes = 10;
  cfg.seed = 1;
  return cfg;
}

void BM_GcnForward(benchmark::State& state) {
  const std::size_t channels = std::size_t(state.range(0));
  auto adj = std::make_shared<const PartitionedAdjacency>(
      build_partitioned_adjacency(build_coco18_layout()));
  std::mt19937_64 rng(1);
  const GcnLayer layer(channels, channels, adj, true, rng);
  const Tensor x = random_tensor({2, channels, 30, 18}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(gcn_forward(layer, x));
}
BENCHMARK(BM_GcnForward)->Arg(16)->Arg(64);

void BM_BlockForward(benchmark::State& state) {
  const std::size_t channels = std::size_t(state.range(0));
  auto adj = std::make_shared<const PartitionedAdjacency>(
      build_partitioned_adjacency(build_coco18_layout()));
  std::mt19937_64 rng(3);
  const StGcnBlock block = make_block(channels, channels, 1, false, adj, true, rng);
  const Tensor x = random_tensor({2, channels, 30, 18}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(block_forward(block, x, Mode::Eval));
}
BENCHMARK(BM_BlockForward)->Arg(16)->Arg(64);

// One streaming step of the compact network for each window length.
void BM_StreamStep(benchmark::State& state) {
  const std::size_t w = std::size_t(state.range(0));
  const Variant variant = static_cast<Variant>(state.range(1));
  Network net(compact_config());
  grow_attach(net, variant);
  WindowConfig cfg;
  cfg.clip_len = 60;
  cfg.window_len = w;
  cfg.mode = variant;
  const ClipTensor window{random_tensor({2, 2, w, 18}, 5), 30.0};
  StreamSession session(cfg, net.config.num_classes);
  for (auto _ : state) benchmark::DoNotOptimize(session.step(net, window));
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_StreamStep)
    ->ArgsProduct({{10, 30, 60},
                   {int(Variant::Consensus), int(Variant::Semantic), int(Variant::SemanticControl)}});

void BM_DynamicBatch(benchmark::State& state) {
  std::vector<ClipTensor> clips;
  for (std::uint64_t i = 0; i < 8; ++i)
    clips.push_back(ClipTensor{random_tensor({4, 2, 100 + 20 * i, 18}, 10 + i), 30.0});
  for (auto _ : state) benchmark::DoNotOptimize(dynamic_batch(clips, LambdaPolicy{2}));
}
BENCHMARK(BM_DynamicBatch);

void BM_SpatialNoise(benchmark::State& state) {
  const ClipTensor clip{random_tensor({2, 2, 300, 18}, 20), 30.0};
  NoiseConfig cfg;
  cfg.spatial_drop_p = 0.2;
  for (auto _ : state) benchmark::DoNotOptimize(inject_spatial_noise(clip, cfg));
}
BENCHMARK(BM_SpatialNoise);

}  // namespace
}  // namespace rwgcn

BENCHMARK_MAIN();
