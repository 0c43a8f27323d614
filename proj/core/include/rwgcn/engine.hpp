#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rwgcn/clip.hpp"
#include "rwgcn/feedback.hpp"
#include "rwgcn/network.hpp"

namespace rwgcn {

/// Latency constraint: each classification sees window_len frames of a
/// clip_len-frame clip.
struct WindowConfig {
  std::size_t clip_len = 300;
  std::size_t window_len = 300;
  double fps_in = 30.0;
  Variant mode = Variant::Consensus;

  /// 1 <= W <= T, T divisible by W, fps > 0. Throws ConfigError.
  void validate() const;
  std::size_t num_windows() const { return clip_len / window_len; }
};

/// T/W contiguous, non-overlapping windows of W frames, in order.
std::vector<ClipTensor> split_windows(const ClipTensor& clip, const WindowConfig& config);

struct ClassificationEvent {
  std::size_t window_index = 0;
  Tensor window_logits;
  Tensor consensus_logits;
  std::size_t predicted_class = 0;
  double wall_time_ms = 0.0;
};

/// Index of the maximum, lowest index on ties.
std::size_t argmax(const Tensor& values);

/// Per-stream state: the feedback vector carried to the next window and the
/// running logit sum behind the consensus prediction. Owned by one stream;
/// the network it runs against is shared read-only.
class StreamSession {
 public:
  StreamSession(WindowConfig config, std::size_t num_classes);

  const WindowConfig& config() const { return config_; }
  const FeedbackState& feedback() const { return fb_; }
  std::size_t windows_seen() const { return windows_seen_; }
  const std::vector<ClassificationEvent>& events() const { return events_; }
  /// logits_sum / windows_seen. Throws StateError before the first window.
  Tensor consensus_logits() const;

  /// Runs one window. Feedback modes require the network to carry the same
  /// feedback variant. Throws DimensionError on a window length mismatch.
  const ClassificationEvent& step(const Network& net, const ClipTensor& window);

 private:
  WindowConfig config_;
  FeedbackState fb_;
  Tensor logits_sum_;
  std::size_t windows_seen_ = 0;
  std::vector<ClassificationEvent> events_;
};

/// split_windows + step over a fresh session; returns the final event.
ClassificationEvent classify_clip(const Network& net, const ClipTensor& clip,
                                  const WindowConfig& config);

/// Actions per second: (T / W) * clips per second.
double compute_aps(double clip_len, double window_len, double clips_per_second);
/// Action product delay in seconds: W / fps.
double compute_apd(double fps_in, double window_len);

struct ThroughputReport {
  std::size_t events = 0;
  std::size_t clips = 0;  // fully classified clips
  double seconds = 0.0;
  double events_per_second() const { return seconds > 0 ? double(events) / seconds : 0.0; }
  double clips_per_second() const { return seconds > 0 ? double(clips) / seconds : 0.0; }
};

/// Streams synthetic clips with num_people person slots through fresh
/// sessions for at least `duration_seconds` of wall time.
ThroughputReport measure_throughput(const Network& net, const WindowConfig& config,
                                    std::size_t num_people, double duration_seconds,
                                    std::uint64_t seed = 7);
/// Measured classifications per second. duration must be >= 1 s.
double measure_aps(const Network& net, const WindowConfig& config, std::size_t num_people,
                   double duration_seconds);

/// {"window":0,"logits":[...],"consensus":[...],"class":3,"ms":1.25}
std::string event_to_json(const ClassificationEvent& event);

struct MetricsRow {
  std::size_t clip_len = 0;
  std::size_t window_len = 0;
  double fps_in = 0.0;
  double cps_in = 0.0;
  double aps_formula = 0.0;
  double aps_measured = 0.0;
  double apd_seconds = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRow& row);

}  // namespace rwgcn
