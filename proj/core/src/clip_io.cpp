#include "rwgcn/clip_io.hpp"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rwgcn/errors.hpp"

namespace rwgcn {
namespace {

using ojson = nlohmann::ordered_json;

const nlohmann::json& field(const nlohmann::json& obj, const char* key, const std::string& path) {
  if (!obj.is_object()) throw ParseError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(path + ": missing field \"" + key + "\"");
  return *it;
}

double number(const nlohmann::json& node, const std::string& path) {
  if (!node.is_number()) throw ParseError(path + ": expected a number");
  const double v = node.get<double>();
  if (!std::isfinite(v)) throw ParseError(path + ": expected a finite number");
  return v;
}

std::size_t index(const nlohmann::json& node, const std::string& path) {
  if (!node.is_number_unsigned()) throw ParseError(path + ": expected a non-negative integer");
  return node.get<std::size_t>();
}

ClipRecord parse_clip_json(const nlohmann::json& doc, const std::string& root) {
  ClipRecord rec;
  rec.fps = number(field(doc, "fps", root), root + ".fps");
  if (!(rec.fps > 0.0)) throw ParseError(root + ".fps: must be > 0");
  if (doc.contains("label") && !doc["label"].is_null()) {
    rec.label = index(doc["label"], root + ".label");
  }
  if (doc.contains("width") || doc.contains("height")) {
    rec.width = number(field(doc, "width", root), root + ".width");
    rec.height = number(field(doc, "height", root), root + ".height");
    if (!(*rec.width > 0.0) || !(*rec.height > 0.0)) {
      throw ParseError(root + ": width and height must be > 0");
    }
  }
  const auto& frames = field(doc, "frames", root);
  if (!frames.is_array()) throw ParseError(root + ".frames: expected an array");
  rec.frames.reserve(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const std::string fpath = root + ".frames[" + std::to_string(f) + "]";
    const auto& people = field(frames[f], "people", fpath);
    if (!people.is_array()) throw ParseError(fpath + ".people: expected an array");
    FrameRecord frame;
    std::set<std::size_t> slots;
    for (std::size_t p = 0; p < people.size(); ++p) {
      const std::string ppath = fpath + ".people[" + std::to_string(p) + "]";
      PersonEntry person;
      person.slot = index(field(people[p], "slot", ppath), ppath + ".slot");
      if (!slots.insert(person.slot).second) {
        throw ParseError(ppath + ".slot: duplicate slot " + std::to_string(person.slot) +
                         " in frame " + std::to_string(f));
      }
      const auto& kps = field(people[p], "keypoints", ppath);
      if (!kps.is_array() || kps.size() != kClipJoints) {
        throw ParseError(ppath + ".keypoints: frame " + std::to_string(f) + " has " +
                         std::to_string(kps.is_array() ? kps.size() : 0) +
                         " keypoints, expected 18");
      }
      person.keypoints.reserve(kClipJoints);
      for (std::size_t k = 0; k < kps.size(); ++k) {
        const std::string kpath = ppath + ".keypoints[" + std::to_string(k) + "]";
        if (!kps[k].is_array() || kps[k].size() != 2) throw ParseError(kpath + ": expected [x, y]");
        person.keypoints.push_back({number(kps[k][0], kpath + "[0]"), number(kps[k][1], kpath + "[1]")});
      }
      frame.people.push_back(std::move(person));
    }
    rec.frames.push_back(std::move(frame));
  }
  return rec;
}

nlohmann::json parse_json(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(what + ": invalid JSON: " + e.what());
  }
}

}  // namespace

ClipRecord parse_clip(const std::string& document) {
  return parse_clip_json(parse_json(document, "clip"), "clip");
}

std::string serialize_clip(const ClipRecord& record) {
  ojson doc;
  doc["fps"] = record.fps;
  if (record.label) doc["label"] = *record.label;
  if (record.width) doc["width"] = *record.width;
  if (record.height) doc["height"] = *record.height;
  ojson frames = ojson::array();
  for (const auto& frame : record.frames) {
    ojson people = ojson::array();
    for (const auto& person : frame.people) {
      ojson kps = ojson::array();
      for (const auto& kp : person.keypoints) kps.push_back({kp[0], kp[1]});
      ojson entry;
      entry["slot"] = person.slot;
      entry["keypoints"] = std::move(kps);
      people.push_back(std::move(entry));
    }
    ojson f;
    f["people"] = std::move(people);
    frames.push_back(std::move(f));
  }
  doc["frames"] = std::move(frames);
  return doc.dump();
}

std::vector<ClipRecord> read_clip_lines(std::istream& in) {
  std::vector<ClipRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string root = "line " + std::to_string(lineno);
    out.push_back(parse_clip_json(parse_json(line, root), root));
  }
  return out;
}

void write_clip_lines(std::ostream& out, const std::vector<ClipRecord>& records) {
  for (const auto& r : records) out << serialize_clip(r) << '\n';
}

std::vector<ClipRecord> load_clip_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open clip file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  // A single document may span lines; JSON Lines has one document per line.
  try {
    const auto doc = nlohmann::json::parse(text);
    return {parse_clip_json(doc, path)};
  } catch (const nlohmann::json::parse_error&) {
    std::istringstream lines(text);
    return read_clip_lines(lines);
  }
}

ClipTensor to_tensor(const ClipRecord& record, std::size_t max_persons, bool normalize) {
  if (max_persons == 0) throw ConfigError("M_cap must be >= 1");
  const std::size_t frames = record.frames.size();
  ClipTensor clip{Tensor({max_persons, kClipChannels, frames, kClipJoints}), record.fps};
  const bool scale = normalize && record.width && record.height;
  const double hw = scale ? *record.width / 2.0 : 1.0;
  const double hh = scale ? *record.height / 2.0 : 1.0;
  for (std::size_t t = 0; t < frames; ++t) {
    for (const auto& person : record.frames[t].people) {
      if (person.slot >= max_persons) {
        throw DataError("frame " + std::to_string(t) + ": person slot " +
                        std::to_string(person.slot) + " exceeds M_cap=" +
                        std::to_string(max_persons));
      }
      if (person.keypoints.size() != kClipJoints) {
        throw DataError("frame " + std::to_string(t) + ": expected 18 keypoints");
      }
      for (std::size_t v = 0; v < kClipJoints; ++v) {
        double x = person.keypoints[v][0];
        double y = person.keypoints[v][1];
        if (scale && !(x == 0.0 && y == 0.0)) {
          x = (x - hw) / hw;
          y = (y - hh) / hh;
        }
        clip.at(person.slot, 0, t, v) = x;
        clip.at(person.slot, 1, t, v) = y;
      }
    }
  }
  return clip;
}

ClipRecord from_tensor(const ClipTensor& clip, std::optional<std::size_t> label) {
  check_clip(clip);
  if (clip.channels() != kClipChannels || clip.joints() != kClipJoints) {
    throw DimensionError("from_tensor expects [M, 2, T, 18], got " +
                         shape_to_string(clip.data.shape()));
  }
  ClipRecord rec;
  rec.fps = clip.fps;
  rec.label = label;
  rec.frames.resize(clip.frames());
  for (std::size_t t = 0; t < clip.frames(); ++t) {
    for (std::size_t m = 0; m < clip.persons(); ++m) {
      PersonEntry person;
      person.slot = m;
      bool any = false;
      for (std::size_t v = 0; v < kClipJoints; ++v) {
        const Keypoint kp{clip.at(m, 0, t, v), clip.at(m, 1, t, v)};
        any = any || kp[0] != 0.0 || kp[1] != 0.0;
        person.keypoints.push_back(kp);
      }
      if (any) rec.frames[t].people.push_back(std::move(person));
    }
  }
  return rec;
}

DatasetManifest parse_manifest(const std::string& document) {
  const auto doc = parse_json(document, "manifest");
  DatasetManifest m;
  const auto& classes = field(doc, "classes", "manifest");
  if (!classes.is_array()) throw ParseError("manifest.classes: expected an array");
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (!classes[i].is_string()) {
      throw ParseError("manifest.classes[" + std::to_string(i) + "]: expected a string");
    }
    m.class_names.push_back(classes[i].get<std::string>());
  }
  const auto& clips = field(doc, "clips", "manifest");
  if (!clips.is_array()) throw ParseError("manifest.clips: expected an array");
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const std::string path = "manifest.clips[" + std::to_string(i) + "]";
    const auto& p = field(clips[i], "path", path);
    const auto& s = field(clips[i], "split", path);
    if (!p.is_string()) throw ParseError(path + ".path: expected a string");
    if (!s.is_string()) throw ParseError(path + ".split: expected a string");
    const std::string split = s.get<std::string>();
    if (split != "train" && split != "val") {
      throw ParseError(path + ".split: expected \"train\" or \"val\"");
    }
    m.clips.push_back({p.get<std::string>(), split == "train" ? Split::Train : Split::Val});
  }
  return m;
}

std::string serialize_manifest(const DatasetManifest& manifest) {
  ojson doc;
  doc["classes"] = manifest.class_names;
  ojson clips = ojson::array();
  for (const auto& e : manifest.clips) {
    ojson entry;
    entry["path"] = e.path;
    entry["split"] = e.split == Split::Train ? "train" : "val";
    clips.push_back(std::move(entry));
  }
  doc["clips"] = std::move(clips);
  return doc.dump();
}

}  // namespace rwgcn
