#pragma once

#include <cstdint>
#include <vector>

#include "rwgcn/clip.hpp"
#include "rwgcn/tensor.hpp"

namespace rwgcn {

/// Emulated upstream failures. Missing keypoints and skeletons are encoded
/// as (0, 0).
struct NoiseConfig {
  double spatial_drop_p = 0.0;  // per keypoint
  double frame_drop_p = 0.0;    // per (person, frame)
  double id_confusion_p = 0.0;  // per (person, frame)
  std::uint64_t seed = 0;

  /// Throws ConfigError unless every probability is in [0, 1].
  void validate() const;
};

/// Target person-slot count after reduction. lambda == 1 is ID agnostic.
struct LambdaPolicy {
  std::size_t lambda = 1;
};

/// Stateless generator: the same key always yields the same value, so noise
/// does not depend on iteration order or thread.
double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t a,
                       std::uint64_t b, std::uint64_t c);

/// Zeroes each (person, frame, joint) keypoint with probability spatial_drop_p.
ClipTensor inject_spatial_noise(const ClipTensor& clip, const NoiseConfig& config);

/// Per (person, frame): drops the skeleton with probability frame_drop_p,
/// and independently moves it to a uniformly chosen other slot with
/// probability id_confusion_p (leaving its source slot zero, overwriting the
/// destination). Confusion is a no-op when M == 1.
ClipTensor inject_temporal_noise(const ClipTensor& clip, const NoiseConfig& config);

/// [B, lambda, C, T_max, V]: clips are tiled from frame 0 up to the longest
/// clip and person slot m is summed into slot m mod lambda (zero padded when
/// M < lambda). Throws DomainError for an empty list and DimensionError for
/// mismatched C or V.
Tensor dynamic_batch(const std::vector<ClipTensor>& clips, const LambdaPolicy& policy);

}  // namespace rwgcn
