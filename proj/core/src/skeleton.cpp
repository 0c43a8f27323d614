#include "rwgcn/skeleton.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <set>

#include <json.hpp>

#include "rwgcn/errors.hpp"

namespace rwgcn {
namespace {
constexpr std::size_t kUnreached = std::numeric_limits<std::size_t>::max();
constexpr double kDegreeFloor = 1e-6;
}  // namespace

SkeletonLayout build_coco18_layout() {
  using namespace coco18;
  SkeletonLayout layout;
  layout.num_joints = kNumJoints;
  layout.center_joint = kNeck;
  layout.edges = {
      {kNose, kNeck},       {kNeck, kRShoulder}, {kRShoulder, kRElbow}, {kRElbow, kRWrist},
      {kNeck, kLShoulder},  {kLShoulder, kLElbow}, {kLElbow, kLWrist},  {kNeck, kRHip},
      {kRHip, kRKnee},      {kRKnee, kRAnkle},   {kNeck, kLHip},        {kLHip, kLKnee},
      {kLKnee, kLAnkle},    {kNose, kREye},      {kREye, kREar},        {kNose, kLEye},
      {kLEye, kLEar},
  };
  return layout;
}

namespace {

std::vector<std::vector<JointIndex>> neighbours(const SkeletonLayout& layout) {
  std::vector<std::vector<JointIndex>> adj(layout.num_joints);
  for (const auto& [a, b] : layout.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  return adj;
}

void check_edges(const SkeletonLayout& layout) {
  if (layout.num_joints == 0) throw ConfigError("skeleton layout has no joints");
  std::set<std::pair<JointIndex, JointIndex>> seen;
  for (const auto& [a, b] : layout.edges) {
    if (a >= layout.num_joints || b >= layout.num_joints) {
      throw ConfigError("edge (" + std::to_string(a) + "," + std::to_string(b) +
                        ") references a joint outside [0, " +
                        std::to_string(layout.num_joints) + ")");
    }
    if (a == b) throw ConfigError("edge list contains a self-loop at joint " + std::to_string(a));
    if (!seen.insert({std::min(a, b), std::max(a, b)}).second) {
      throw ConfigError("duplicate edge (" + std::to_string(a) + "," + std::to_string(b) + ")");
    }
  }
  if (layout.center_joint >= layout.num_joints) {
    throw ConfigError("center joint out of range");
  }
}

}  // namespace

std::vector<std::size_t> hop_distances(const SkeletonLayout& layout, JointIndex source) {
  check_edges(layout);
  if (source >= layout.num_joints) {
    throw ConfigError("hop_distances source " + std::to_string(source) + " out of range");
  }
  const auto adj = neighbours(layout);
  std::vector<std::size_t> dist(layout.num_joints, kUnreached);
  std::deque<JointIndex> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const JointIndex u = queue.front();
    queue.pop_front();
    for (JointIndex v : adj[u]) {
      if (dist[v] == kUnreached) {
        dist[v] = dist[u] + 1;
        queue.push_back(v);
      }
    }
  }
  for (std::size_t j = 0; j < dist.size(); ++j) {
    if (dist[j] == kUnreached) {
      throw ConfigError("skeleton graph is disconnected: joint " + std::to_string(j) +
                        " unreachable from " + std::to_string(source));
    }
  }
  return dist;
}

void validate_layout(const SkeletonLayout& layout) {
  (void)hop_distances(layout, layout.center_joint);
}

Tensor normalized_adjacency(const SkeletonLayout& layout) {
  validate_layout(layout);
  const std::size_t v = layout.num_joints;
  Tensor a({v, v});
  for (std::size_t i = 0; i < v; ++i) a.at({i, i}) = 1.0;
  for (const auto& [i, j] : layout.edges) {
    a.at({i, j}) = 1.0;
    a.at({j, i}) = 1.0;
  }
  for (std::size_t j = 0; j < v; ++j) {
    double degree = 0.0;
    for (std::size_t i = 0; i < v; ++i) degree += a.at({i, j});
    degree = std::max(degree, kDegreeFloor);
    for (std::size_t i = 0; i < v; ++i) a.at({i, j}) /= degree;
  }
  return a;
}

PartitionedAdjacency build_partitioned_adjacency(const SkeletonLayout& layout) {
  const Tensor norm = normalized_adjacency(layout);
  const auto d = hop_distances(layout, layout.center_joint);
  const std::size_t v = layout.num_joints;
  PartitionedAdjacency out;
  out.matrices = Tensor({kNumPartitions, v, v});
  for (std::size_t i = 0; i < v; ++i) {
    for (std::size_t j = 0; j < v; ++j) {
      const double w = norm.at({i, j});
      if (w == 0.0) continue;
      Partition p = Partition::Root;
      if (d[j] < d[i]) {
        p = Partition::Centripetal;
      } else if (d[j] > d[i]) {
        p = Partition::Centrifugal;
      }
      out.matrices.at({static_cast<std::size_t>(p), i, j}) = w;
    }
  }
  return out;
}

Tensor PartitionedAdjacency::combined() const {
  const std::size_t v = num_joints();
  Tensor sum({v, v});
  for (std::size_t p = 0; p < num_partitions(); ++p)
    for (std::size_t k = 0; k < v * v; ++k) sum[k] += matrices[p * v * v + k];
  return sum;
}

std::string layout_to_json(const SkeletonLayout& layout) {
  nlohmann::ordered_json doc;
  doc["num_joints"] = layout.num_joints;
  auto edges = nlohmann::ordered_json::array();
  for (const auto& [a, b] : layout.edges) edges.push_back({a, b});
  doc["edges"] = std::move(edges);
  doc["center"] = layout.center_joint;
  return doc.dump();
}

SkeletonLayout layout_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("layout: invalid JSON: ") + e.what());
  }
  auto require_uint = [](const nlohmann::json& node, const std::string& path) {
    if (!node.is_number_unsigned()) throw ParseError(path + ": expected a non-negative integer");
    return node.get<std::size_t>();
  };
  if (!doc.is_object()) throw ParseError("layout: expected an object");
  for (const char* key : {"num_joints", "edges", "center"}) {
    if (!doc.contains(key)) throw ParseError(std::string("layout: missing field \"") + key + "\"");
  }
  SkeletonLayout layout;
  layout.num_joints = require_uint(doc["num_joints"], "layout.num_joints");
  layout.center_joint = require_uint(doc["center"], "layout.center");
  if (!doc["edges"].is_array()) throw ParseError("layout.edges: expected an array");
  for (std::size_t k = 0; k < doc["edges"].size(); ++k) {
    const auto& e = doc["edges"][k];
    const std::string path = "layout.edges[" + std::to_string(k) + "]";
    if (!e.is_array() || e.size() != 2) throw ParseError(path + ": expected a pair");
    layout.edges.emplace_back(require_uint(e[0], path + "[0]"), require_uint(e[1], path + "[1]"));
  }
  validate_layout(layout);
  return layout;
}

}  // namespace rwgcn
