#include "rwgcn/engine.hpp"

#include <chrono>
#include <iomanip>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rwgcn/errors.hpp"

namespace rwgcn {

void check_clip(const ClipTensor& clip) {
  if (clip.data.rank() != 4) {
    throw DimensionError("clip tensor must be [M, C, T, V], got " +
                         shape_to_string(clip.data.shape()));
  }
}

void WindowConfig::validate() const {
  if (window_len == 0) throw ConfigError("window length W must be >= 1");
  if (window_len > clip_len) {
    throw ConfigError("window length W=" + std::to_string(window_len) +
                      " exceeds clip length T=" + std::to_string(clip_len));
  }
  if (clip_len % window_len != 0) {
    throw ConfigError("clip length T=" + std::to_string(clip_len) +
                      " is not a multiple of window length W=" + std::to_string(window_len));
  }
  if (!(fps_in > 0.0)) throw ConfigError("fps_in must be > 0");
}

std::vector<ClipTensor> split_windows(const ClipTensor& clip, const WindowConfig& config) {
  config.validate();
  check_clip(clip);
  if (clip.frames() != config.clip_len) {
    throw DimensionError("clip has " + std::to_string(clip.frames()) + " frames, config expects T=" +
                         std::to_string(config.clip_len));
  }
  const std::size_t m = clip.persons(), c = clip.channels(), v = clip.joints();
  const std::size_t w = config.window_len;
  std::vector<ClipTensor> windows;
  windows.reserve(config.num_windows());
  for (std::size_t k = 0; k < config.num_windows(); ++k) {
    ClipTensor win{Tensor({m, c, w, v}), clip.fps};
    for (std::size_t p = 0; p < m; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t t = 0; t < w; ++t)
          for (std::size_t j = 0; j < v; ++j) win.at(p, ch, t, j) = clip.at(p, ch, k * w + t, j);
    windows.push_back(std::move(win));
  }
  return windows;
}

std::size_t argmax(const Tensor& values) {
  if (values.empty()) throw DimensionError("argmax of an empty tensor");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

StreamSession::StreamSession(WindowConfig config, std::size_t num_classes)
    : config_(std::move(config)), logits_sum_({num_classes}) {
  config_.validate();
}

Tensor StreamSession::consensus_logits() const {
  if (windows_seen_ == 0) throw StateError("no window has been classified yet");
  return logits_sum_ * (1.0 / static_cast<double>(windows_seen_));
}

const ClassificationEvent& StreamSession::step(const Network& net, const ClipTensor& window) {
  check_clip(window);
  if (window.frames() != config_.window_len) {
    throw DimensionError("window has " + std::to_string(window.frames()) +
                         " frames, session expects W=" + std::to_string(config_.window_len));
  }
  if (net.config.num_classes != logits_sum_.size()) {
    throw DimensionError("network class count does not match the session");
  }
  const bool feedback_mode = config_.mode != Variant::Consensus;
  if (feedback_mode && net.feedback.variant != config_.mode) {
    throw ConfigError("session mode " + variant_name(config_.mode) +
                      " requires a network with that feedback attached (network has " +
                      variant_name(net.feedback.variant) + ")");
  }

  const auto start = std::chrono::steady_clock::now();
  const NetworkOutput out = network_forward(net, window.data, feedback_mode ? &fb_ : nullptr);
  if (feedback_mode) {
    fb_ = compress_features(out.features, *net.feedback.compressor, windows_seen_);
  }
  logits_sum_ += out.logits;
  ++windows_seen_;
  const auto stop = std::chrono::steady_clock::now();

  ClassificationEvent event;
  event.window_index = windows_seen_ - 1;
  event.window_logits = out.logits;
  event.consensus_logits = consensus_logits();
  event.predicted_class = argmax(event.consensus_logits);
  event.wall_time_ms = std::chrono::duration<double, std::milli>(stop - start).count();
  events_.push_back(std::move(event));
  return events_.back();
}

ClassificationEvent classify_clip(const Network& net, const ClipTensor& clip,
                                  const WindowConfig& config) {
  StreamSession session(config, net.config.num_classes);
  for (const ClipTensor& w : split_windows(clip, config)) session.step(net, w);
  return session.events().back();
}

double compute_aps(double clip_len, double window_len, double clips_per_second) {
  if (!(clip_len > 0.0) || !(window_len > 0.0) || !(clips_per_second > 0.0)) {
    throw DomainError("compute_aps: T, W and clips/second must all be positive");
  }
  if (window_len > clip_len) throw DomainError("compute_aps: W must not exceed T");
  return clip_len / window_len * clips_per_second;
}

double compute_apd(double fps_in, double window_len) {
  if (!(fps_in > 0.0)) throw DomainError("compute_apd: fps must be positive");
  if (!(window_len >= 1.0)) throw DomainError("compute_apd: W must be >= 1");
  return window_len / fps_in;
}

ThroughputReport measure_throughput(const Network& net, const WindowConfig& config,
                                    std::size_t num_people, double duration_seconds,
                                    std::uint64_t seed) {
  config.validate();
  if (num_people == 0) throw ConfigError("measure_throughput needs at least one person");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  ClipTensor clip{Tensor({num_people, net.config.in_channels, config.clip_len,
                          net.config.layout.num_joints}),
                  config.fps_in};
  for (double& x : clip.data.data()) x = coord(rng);
  const std::vector<ClipTensor> windows = split_windows(clip, config);

  ThroughputReport report;
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };
  while (elapsed() < duration_seconds) {
    StreamSession session(config, net.config.num_classes);
    for (const ClipTensor& w : windows) {
      session.step(net, w);
      ++report.events;
      if (elapsed() >= duration_seconds) break;
    }
    if (session.windows_seen() == windows.size()) ++report.clips;
  }
  report.seconds = elapsed();
  return report;
}

double measure_aps(const Network& net, const WindowConfig& config, std::size_t num_people,
                   double duration_seconds) {
  if (!(duration_seconds >= 1.0)) throw DomainError("measure_aps: duration must be >= 1 second");
  return measure_throughput(net, config, num_people, duration_seconds).events_per_second();
}

std::string event_to_json(const ClassificationEvent& event) {
  nlohmann::ordered_json doc;
  doc["window"] = event.window_index;
  doc["logits"] = event.window_logits.values();
  doc["consensus"] = event.consensus_logits.values();
  doc["class"] = event.predicted_class;
  doc["ms"] = event.wall_time_ms;
  return doc.dump();
}

std::string metrics_csv_header() { return "T,W,fps_in,cps_in,aps_formula,aps_measured,apd_seconds"; }

std::string metrics_csv_row(const MetricsRow& row) {
  std::ostringstream os;
  os << std::setprecision(10) << row.clip_len << ',' << row.window_len << ',' << row.fps_in << ','
     << row.cps_in << ',' << row.aps_formula << ',' << row.aps_measured << ',' << row.apd_seconds;
  return os.str();
}

}  // namespace rwgcn
