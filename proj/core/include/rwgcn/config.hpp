#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>

#include "rwgcn/engine.hpp"
#include "rwgcn/noise.hpp"

namespace rwgcn {

/// Flat key/value view of a TOML-style file:
///
///   # comment
///   [window]
///   clip_len = 300
///   mode = "SF"
///
/// Keys inside a [section] are stored as "section.key". Values may be
/// quoted strings, numbers or booleans; no arrays or inline tables.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  /// Throws ConfigError with the line number on malformed input.
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::string& path);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }

  std::optional<std::string> get_string(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<std::size_t> get_size(const std::string& key) const;
  std::optional<std::uint64_t> get_u64(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Everything the CLI reads from --config.
struct EngineConfig {
  WindowConfig window;
  NoiseConfig noise;
  LambdaPolicy lambda;
  std::size_t max_persons = 2;
  std::size_t num_classes = 120;
  std::optional<std::string> checkpoint;
};

/// Recognized keys: window.{clip_len,window_len,fps_in,mode},
/// noise.{spatial_drop_p,frame_drop_p,id_confusion_p,seed,lambda},
/// model.{checkpoint,num_classes,max_persons}. Unknown keys are rejected.
EngineConfig engine_config_from(const KeyValueConfig& kv, EngineConfig base = {});

}  // namespace rwgcn
