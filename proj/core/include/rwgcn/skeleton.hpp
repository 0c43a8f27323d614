#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "rwgcn/tensor.hpp"

namespace rwgcn {

using JointIndex = std::size_t;
using Edge = std::pair<JointIndex, JointIndex>;

/// Undirected skeleton graph. Self-connections are not listed; they are
/// added when the adjacency is built.
struct SkeletonLayout {
  std::size_t num_joints = 0;
  std::vector<Edge> edges;
  JointIndex center_joint = 0;

  friend bool operator==(const SkeletonLayout&, const SkeletonLayout&) = default;
};

namespace coco18 {
inline constexpr std::size_t kNumJoints = 18;
enum Joint : JointIndex {
  kNose = 0, kNeck, kRShoulder, kRElbow, kRWrist, kLShoulder, kLElbow, kLWrist,
  kRHip, kRKnee, kRAnkle, kLHip, kLKnee, kLAnkle, kREye, kLEye, kREar, kLEar,
};
}  // namespace coco18

/// OpenPose-style COCO 18-joint tree, centered on the neck.
SkeletonLayout build_coco18_layout();

/// Checks index ranges, self-loops, duplicate edges and connectivity.
/// Throws ConfigError.
void validate_layout(const SkeletonLayout& layout);

/// Breadth-first hop counts from `source`. Throws ConfigError when the graph
/// is disconnected or the source is out of range.
std::vector<std::size_t> hop_distances(const SkeletonLayout& layout, JointIndex source);

enum class Partition : std::size_t { Root = 0, Centripetal = 1, Centrifugal = 2 };
inline constexpr std::size_t kNumPartitions = 3;

/// Stack of P normalized V x V adjacency matrices, stored as [P, V, V].
/// Entry (p, i, j) weights the contribution of joint i to output joint j.
struct PartitionedAdjacency {
  std::size_t num_partitions() const { return matrices.dim(0); }
  std::size_t num_joints() const { return matrices.dim(1); }
  double at(std::size_t p, std::size_t i, std::size_t j) const {
    return matrices.at({p, i, j});
  }
  /// Sum over partitions, [V, V].
  Tensor combined() const;

  Tensor matrices;
};

/// Column-normalized (A + I), [V, V]. Each column j is divided by its sum
/// (floored at 1e-6).
Tensor normalized_adjacency(const SkeletonLayout& layout);

/// Splits normalized (A + I) into root / centripetal / centrifugal parts by
/// comparing hop distances of the two endpoints to the center joint.
PartitionedAdjacency build_partitioned_adjacency(const SkeletonLayout& layout);

/// {"num_joints":18,"edges":[[0,1],...],"center":1}
std::string layout_to_json(const SkeletonLayout& layout);
/// Parses and validates. Throws ParseError for schema problems and
/// ConfigError for an invalid graph.
SkeletonLayout layout_from_json(const std::string& text);

}  // namespace rwgcn
