#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tsgcn/tensor.hpp"

namespace tsgcn {

/// Error while reading skeleton data; the message carries file and line.
class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Joint set and bone list of a skeleton format.
struct JointLayout {
  std::string name;
  std::size_t joint_count = 0;
  std::vector<Edge> edges;
  std::size_t root_joint = 0;

  /// Checks edge indices, self-edges and duplicates; with `require_connected`
  /// also that the edges span a single connected component.
  void validate(bool require_connected = true) const;
  bool connected() const;
};

/// OpenPose/AlphaPose 18-keypoint layout (nose, neck, shoulders, ...). Root: neck.
JointLayout coco18_layout();
/// Kinect V1 20-joint layout. Root: hip center.
JointLayout kinect20_layout();

// Layout file (plain text, '#' comments):
//   name <id>
//   joints <count>
//   root <index>
//   edge <i> <j>      (one line per bone)
JointLayout parse_layout(std::istream& is, const std::string& source);
JointLayout load_layout_file(const std::filesystem::path& path);
void write_layout(std::ostream& os, const JointLayout& layout);
/// "coco18" / "kinect20" resolve to built-ins; anything else is read as a layout file.
JointLayout resolve_layout(const std::string& name_or_path);

struct SkeletonFrame {
  Tensor coords;  // [joint_count x dims]
  bool valid = true;
};

struct SkeletonSequence {
  std::string id;
  std::size_t label = 0;
  std::vector<SkeletonFrame> frames;
  std::string layout;

  std::size_t dims() const { return frames.empty() ? 0 : frames.front().coords.dim(1); }
};

/// One model input: data is [dims x T x joint_count].
struct SkeletonClip {
  Tensor data;
  std::size_t label = 0;
  std::string sequence_id;
  std::size_t start_frame = 0;
};

struct ManifestEntry {
  std::filesystem::path path;
  std::string label;
  std::string id;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::string layout;
  std::vector<std::string> class_names;  // first-appearance order

  std::size_t class_index(const std::string& label) const;
};

/// Manifest: comma-separated, header row `path,label,id`. Relative paths resolve
/// against the manifest's directory.
DatasetManifest parse_manifest(std::istream& is, const std::filesystem::path& base_dir,
                               const std::string& source = "<manifest>");
DatasetManifest load_manifest(const std::filesystem::path& path);

// Sequence file: JSON Lines, one record per sequence:
//   {"id": "s01", "label": "fall", "frames": [ F, F, ... ]}
// where each frame F is either an array of joints [[x, y], ...] (valid) or an
// object {"joints": [[x, y], ...], "valid": false}. Joints are [x, y] or
// [x, y, z] in layout order.
SkeletonSequence parse_sequence_record(const std::string& line, const JointLayout& layout,
                                       const std::string& where);
std::string format_sequence_record(const SkeletonSequence& seq,
                                   std::span<const std::string> class_names);

/// One sequence per manifest entry, selected by id from its file.
std::vector<SkeletonSequence> load_sequences(const DatasetManifest& manifest,
                                             const JointLayout& layout);

/// Keeps exactly the frames flagged valid, in order.
SkeletonSequence drop_invalid_frames(const SkeletonSequence& seq);

/// Windows starting at 0, stride, 2*stride, ... that fit entirely inside the
/// sequence. A sequence shorter than clip_len yields one clip padded with its
/// last frame.
std::vector<SkeletonClip> window_sequence(const SkeletonSequence& seq, std::size_t clip_len,
                                          std::size_t stride);

/// Per frame: translate the root joint to the origin, then divide by the largest
/// joint-to-root distance when it is at least 1e-8.
SkeletonClip normalize_clip(const SkeletonClip& clip, const JointLayout& layout);

struct DatasetSplit {
  std::vector<SkeletonClip> train;
  std::vector<SkeletonClip> test;
};

/// Stratified, seeded split. Per class, round(train_fraction * count) clips go
/// to train, clamped so both sides get at least one clip. Each side keeps the
/// input order.
DatasetSplit split_dataset(std::span<const SkeletonClip> clips, double train_fraction,
                           std::uint64_t seed, std::span<const std::string> class_names = {});

}  // namespace tsgcn
