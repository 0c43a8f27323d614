#include "rwgcn/noise.hpp"

#include <algorithm>

#include "rwgcn/errors.hpp"

namespace rwgcn {
namespace {

enum Stream : std::uint64_t { kSpatial = 1, kFrameDrop = 2, kConfusion = 3, kConfusionTarget = 4 };

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

void NoiseConfig::validate() const {
  auto check = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ConfigError(std::string(name) + " must be a probability in [0, 1]");
    }
  };
  check(spatial_drop_p, "spatial_drop_p");
  check(frame_drop_p, "frame_drop_p");
  check(id_confusion_p, "id_confusion_p");
}

double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                       std::uint64_t b, std::uint64_t c) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(stream));
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  h = splitmix64(h ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

ClipTensor inject_spatial_noise(const ClipTensor& clip, const NoiseConfig& config) {
  config.validate();
  check_clip(clip);
  ClipTensor out = clip;
  if (config.spatial_drop_p == 0.0) return out;
  for (std::size_t m = 0; m < clip.persons(); ++m)
    for (std::size_t t = 0; t < clip.frames(); ++t)
      for (std::size_t v = 0; v < clip.joints(); ++v) {
        if (counter_uniform(config.seed, kSpatial, m, t, v) < config.spatial_drop_p) {
          for (std::size_t c = 0; c < clip.channels(); ++c) out.at(m, c, t, v) = 0.0;
        }
      }
  return out;
}

ClipTensor inject_temporal_noise(const ClipTensor& clip, const NoiseConfig& config) {
  config.validate();
  check_clip(clip);
  const std::size_t persons = clip.persons();
  ClipTensor out = clip;
  std::vector<bool> moved(persons);
  std::vector<std::size_t> target(persons);
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    ClipTensor base_frame{Tensor({persons, clip.channels(), 1, clip.joints()}), clip.fps};
    for (std::size_t m = 0; m < persons; ++m) {
      const bool dropped = counter_uniform(config.seed, kFrameDrop, m, t, 0) < config.frame_drop_p;
      for (std::size_t c = 0; c < clip.channels(); ++c)
        for (std::size_t v = 0; v < clip.joints(); ++v)
          base_frame.at(m, c, 0, v) = dropped ? 0.0 : clip.at(m, c, t, v);
      moved[m] = persons > 1 &&
                 counter_uniform(config.seed, kConfusion, m, t, 0) < config.id_confusion_p;
      if (moved[m]) {
        const auto r = static_cast<std::size_t>(
            counter_uniform(config.seed, kConfusionTarget, m, t, 0) * double(persons - 1));
        const std::size_t pick = std::min(r, persons - 2);
        target[m] = pick < m ? pick : pick + 1;
      }
    }
    auto copy_slot = [&](std::size_t dst, std::size_t src, bool zero) {
      for (std::size_t c = 0; c < clip.channels(); ++c)
        for (std::size_t v = 0; v < clip.joints(); ++v)
          out.at(dst, c, t, v) = zero ? 0.0 : base_frame.at(src, c, 0, v);
    };
    for (std::size_t m = 0; m < persons; ++m) copy_slot(m, m, moved[m]);
    for (std::size_t m = 0; m < persons; ++m) {
      if (moved[m]) copy_slot(target[m], m, false);
    }
  }
  return out;
}

Tensor dynamic_batch(const std::vector<ClipTensor>& clips, const LambdaPolicy& policy) {
  if (clips.empty()) throw DomainError("dynamic_batch: empty clip list");
  if (policy.lambda == 0) throw ConfigError("lambda must be >= 1");
  for (const auto& c : clips) check_clip(c);
  const std::size_t channels = clips.front().channels();
  const std::size_t joints = clips.front().joints();
  std::size_t t_max = 0;
  for (const auto& c : clips) {
    if (c.channels() != channels || c.joints() != joints) {
      throw DimensionError("dynamic_batch: clips must share C and V");
    }
    if (c.frames() == 0) throw DomainError("dynamic_batch: clip with zero frames");
    t_max = std::max(t_max, c.frames());
  }
  const std::size_t lambda = policy.lambda;
  Tensor out({clips.size(), lambda, channels, t_max, joints});
  for (std::size_t b = 0; b < clips.size(); ++b) {
    const ClipTensor& clip = clips[b];
    for (std::size_t m = 0; m < clip.persons(); ++m) {
      const std::size_t slot = m % lambda;
      for (std::size_t c = 0; c < channels; ++c)
        for (std::size_t t = 0; t < t_max; ++t) {
          const std::size_t src_t = t % clip.frames();
          double* dst = out.data().data() +
                        (((b * lambda + slot) * channels + c) * t_max + t) * joints;
          for (std::size_t v = 0; v < joints; ++v) dst[v] += clip.at(m, c, src_t, v);
        }
    }
  }
  return out;
}

}  // namespace rwgcn
