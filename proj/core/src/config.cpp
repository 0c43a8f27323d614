#include "rwgcn/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "rwgcn/errors.hpp"

namespace rwgcn {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside quotes.
std::string strip_comment(const std::string& s) {
  bool quoted = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') quoted = !quoted;
    if (s[i] == '#' && !quoted) return s.substr(0, i);
  }
  return s;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(const std::string& text) {
  KeyValueConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string body = trim(strip_comment(line));
    if (body.empty()) continue;
    const std::string where = "config line " + std::to_string(lineno) + ": ";
    if (body.front() == '[') {
      if (body.back() != ']' || body.size() < 3) throw ConfigError(where + "malformed section header");
      section = trim(body.substr(1, body.size() - 2));
      continue;
    }
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    const std::string key = trim(body.substr(0, eq));
    std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (value.empty()) throw ConfigError(where + "empty value for " + key);
    if (value.front() == '"') {
      if (value.size() < 2 || value.back() != '"') throw ConfigError(where + "unterminated string");
      value = value.substr(1, value.size() - 2);
    }
    const std::string full = section.empty() ? key : section + "." + key;
    if (!cfg.values_.emplace(full, value).second) throw ConfigError(where + "duplicate key " + full);
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::optional<std::string> KeyValueConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  return it->second;
}

std::optional<double> KeyValueConfig::get_double(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(*s, &used);
    if (used != s->size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got \"" + *s + "\"");
  }
}

std::optional<std::uint64_t> KeyValueConfig::get_u64(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s->data(), s->data() + s->size(), v);
  if (ec != std::errc() || ptr != s->data() + s->size()) {
    throw ConfigError(key + ": expected a non-negative integer, got \"" + *s + "\"");
  }
  return v;
}

std::optional<std::size_t> KeyValueConfig::get_size(const std::string& key) const {
  auto v = get_u64(key);
  if (!v) return std::nullopt;
  return static_cast<std::size_t>(*v);
}

std::optional<bool> KeyValueConfig::get_bool(const std::string& key) const {
  auto s = get_string(key);
  if (!s) return std::nullopt;
  if (*s == "true") return true;
  if (*s == "false") return false;
  throw ConfigError(key + ": expected true or false");
}

EngineConfig engine_config_from(const KeyValueConfig& kv, EngineConfig cfg) {
  static const std::set<std::string> known = {
      "window.clip_len",     "window.window_len",      "window.fps_in",     "window.mode",
      "noise.spatial_drop_p", "noise.frame_drop_p",    "noise.id_confusion_p", "noise.seed",
      "noise.lambda",        "model.checkpoint",       "model.num_classes", "model.max_persons",
  };
  for (const auto& [key, value] : kv.values()) {
    if (known.count(key) == 0) throw ConfigError("unknown config key \"" + key + "\"");
  }
  if (auto v = kv.get_size("window.clip_len")) cfg.window.clip_len = *v;
  if (auto v = kv.get_size("window.window_len")) cfg.window.window_len = *v;
  if (auto v = kv.get_double("window.fps_in")) cfg.window.fps_in = *v;
  if (auto v = kv.get_string("window.mode")) cfg.window.mode = parse_variant(*v);
  if (auto v = kv.get_double("noise.spatial_drop_p")) cfg.noise.spatial_drop_p = *v;
  if (auto v = kv.get_double("noise.frame_drop_p")) cfg.noise.frame_drop_p = *v;
  if (auto v = kv.get_double("noise.id_confusion_p")) cfg.noise.id_confusion_p = *v;
  if (auto v = kv.get_u64("noise.seed")) cfg.noise.seed = *v;
  if (auto v = kv.get_size("noise.lambda")) cfg.lambda.lambda = *v;
  if (auto v = kv.get_string("model.checkpoint")) cfg.checkpoint = *v;
  if (auto v = kv.get_size("model.num_classes")) cfg.num_classes = *v;
  if (auto v = kv.get_size("model.max_persons")) cfg.max_persons = *v;
  cfg.window.validate();
  cfg.noise.validate();
  if (cfg.lambda.lambda == 0) throw ConfigError("noise.lambda must be >= 1");
  return cfg;
}

}  // namespace rwgcn
