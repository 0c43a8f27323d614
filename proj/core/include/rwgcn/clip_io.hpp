#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rwgcn/clip.hpp"

namespace rwgcn {

inline constexpr std::size_t kClipJoints = 18;
inline constexpr std::size_t kClipChannels = 2;

using Keypoint = std::array<double, 2>;

struct PersonEntry {
  std::size_t slot = 0;
  std::vector<Keypoint> keypoints;  // exactly 18
  friend bool operator==(const PersonEntry&, const PersonEntry&) = default;
};

struct FrameRecord {
  std::vector<PersonEntry> people;
  friend bool operator==(const FrameRecord&, const FrameRecord&) = default;
};

/// Interchange form of one clip:
/// {"fps":30.0,"label":3,"width":640.0,"height":480.0,
///  "frames":[{"people":[{"slot":0,"keypoints":[[x,y], ... 18]}]}]}
/// label, width and height are optional.
struct ClipRecord {
  double fps = 30.0;
  std::optional<std::size_t> label;
  std::optional<double> width;
  std::optional<double> height;
  std::vector<FrameRecord> frames;
  friend bool operator==(const ClipRecord&, const ClipRecord&) = default;
};

/// Throws ParseError naming the path of the offending field.
ClipRecord parse_clip(const std::string& document);
/// Canonical compact JSON with keys in schema order.
std::string serialize_clip(const ClipRecord& record);

/// One clip per non-empty line.
std::vector<ClipRecord> read_clip_lines(std::istream& in);
void write_clip_lines(std::ostream& out, const std::vector<ClipRecord>& records);
/// Reads a file holding either one (pretty) JSON clip or JSON Lines.
std::vector<ClipRecord> load_clip_file(const std::string& path);

/// Dense [M_cap, 2, T, 18] tensor. Absent persons stay zero. With width and
/// height present, coordinates are centered and scaled to [-1, 1] by the
/// half extents; (0, 0) keypoints mark missing joints and stay (0, 0).
/// Throws DataError if a slot does not fit in M_cap.
ClipTensor to_tensor(const ClipRecord& record, std::size_t max_persons, bool normalize = true);

/// Inverse of to_tensor without normalization: every slot that holds a
/// non-zero keypoint becomes a person entry.
ClipRecord from_tensor(const ClipTensor& clip, std::optional<std::size_t> label = std::nullopt);

enum class Split { Train, Val };

struct ManifestEntry {
  std::string path;
  Split split = Split::Train;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// {"classes":["walk_right","walk_left"],"clips":[{"path":"...","split":"train"}]}
struct DatasetManifest {
  std::vector<ManifestEntry> clips;
  std::vector<std::string> class_names;
  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

DatasetManifest parse_manifest(const std::string& document);
std::string serialize_manifest(const DatasetManifest& manifest);

}  // namespace rwgcn
