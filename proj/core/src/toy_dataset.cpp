#include <array>
#include <cstdio>
#include <random>

#include "rwgcn/errors.hpp"
#include "rwgcn/training.hpp"

namespace rwgcn {

namespace {

// Standing pose in COCO-18 joint order, x right, y down.
constexpr std::array<std::array<double, 2>, 18> kPose = {{
    {0.00, -0.50}, {0.00, -0.35}, {-0.12, -0.35}, {-0.18, -0.15}, {-0.20, 0.02},
    {0.12, -0.35}, {0.18, -0.15}, {0.20, 0.02},   {-0.08, 0.05},  {-0.09, 0.30},
    {-0.10, 0.55}, {0.08, 0.05},  {0.09, 0.30},   {0.10, 0.55},   {-0.03, -0.53},
    {0.03, -0.53}, {-0.06, -0.50}, {0.06, -0.50},
}};

}  // namespace

ToyDataset make_toy_dataset(std::size_t num_samples, std::size_t frames, std::uint64_t seed) {
  if (num_samples == 0) throw DomainError("toy dataset needs at least one sample");
  if (frames < 8) throw DomainError("toy dataset needs at least 8 frames");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> start(-0.6, -0.4);
  std::uniform_real_distribution<double> travel(0.6, 1.0);
  std::uniform_real_distribution<double> lift(-0.1, 0.1);
  std::normal_distribution<double> jitter(0.0, 0.01);
  const std::size_t v = kPose.size();

  ToyDataset out;
  out.manifest.class_names = {"left_to_right", "right_to_left"};
  for (std::size_t pair = 0; out.clips.size() < num_samples; ++pair) {
    ClipTensor right{Tensor({1, 2, frames, v}), 30.0};
    const double x0 = start(rng);
    const double step = travel(rng) / static_cast<double>(frames - 1);
    const double y0 = lift(rng);
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j = 0; j < v; ++j) {
        right.at(0, 0, t, j) = kPose[j][0] + x0 + step * static_cast<double>(t) + jitter(rng);
        right.at(0, 1, t, j) = kPose[j][1] + y0 + jitter(rng);
      }
    }
    ClipTensor left = right;
    for (std::size_t t = 0; t < frames; ++t) {
      for (std::size_t j = 0; j < v; ++j) left.at(0, 0, t, j) = -right.at(0, 0, t, j);
    }
    for (std::size_t label = 0; label < 2 && out.clips.size() < num_samples; ++label) {
      const ClipTensor& clip = label == 0 ? right : left;
      char path[48];
      std::snprintf(path, sizeof(path), "toy/clip_%04zu.json", out.clips.size());
      out.manifest.clips.push_back({path, Split::Train});
      out.records.push_back(from_tensor(clip, label));
      out.clips.push_back({clip, label});
    }
  }
  return out;
}

double mean_x_velocity(const ClipTensor& clip) {
  check_clip(clip);
  if (clip.frames() < 2) return 0.0;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t m = 0; m < clip.persons(); ++m) {
    for (std::size_t t = 1; t < clip.frames(); ++t) {
      for (std::size_t j = 0; j < clip.joints(); ++j) {
        sum += clip.at(m, 0, t, j) - clip.at(m, 0, t - 1, j);
        ++count;
      }
    }
  }
  return sum / static_cast<double>(count);
}

}  // namespace rwgcn
