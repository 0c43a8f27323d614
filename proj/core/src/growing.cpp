#include "rwgcn/growing.hpp"

#include "rwgcn/errors.hpp"

namespace rwgcn {

std::vector<std::size_t> control_attach_points(const NetworkConfig& config) {
  std::vector<std::size_t> points;
  for (std::size_t i = 0; i < config.blocks.size(); ++i) {
    const bool last = i + 1 == config.blocks.size();
    if (last || config.blocks[i + 1].out_channels != config.blocks[i].out_channels) {
      points.push_back(i);
    }
  }
  return points;
}

void grow_attach(Network& net, Variant variant, std::uint64_t seed) {
  if (net.feedback.variant != Variant::Consensus || net.has_feedback()) {
    throw StateError("feedback already attached (" + variant_name(net.feedback.variant) + ")");
  }
  if (variant == Variant::Consensus) return;

  std::mt19937_64 rng(seed);
  FeedbackModules& fb = net.feedback;
  fb.compressor = FeedbackCompressor(net.config.feature_channels(), rng);
  if (uses_semantic(variant)) {
    fb.semantic = SemanticAttentionBlock(net.config.in_channels, rng);
  }
  if (uses_control(variant)) {
    for (std::size_t idx : control_attach_points(net.config)) {
      fb.control.push_back({idx, ControlFeedbackBlock(net.config.blocks[idx].out_channels, rng)});
    }
  }
  fb.variant = variant;
}

}  // namespace rwgcn
