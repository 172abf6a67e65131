#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsgcn/skeleton.hpp"

namespace tsgcn {

/// Windowed clips ready for training, already split into train and test.
struct ClipArchive {
  JointLayout layout;
  std::size_t dims = 2;
  std::size_t clip_len = 0;
  std::vector<std::string> class_names;
  std::vector<SkeletonClip> train;
  std::vector<SkeletonClip> test;
};

// Binary, little-endian:
//   "TSGCCLIP" | u32 version=1 | layout (as text block, u32 length) |
//   u64 dims | u64 clip_len | u32 num_classes | classes (u32 len + bytes) |
//   u64 n_train | u64 n_test | clips: u32 label | u64 start | u32 id_len | id |
//   f64 values[dims * clip_len * joints]
void save_archive(const std::filesystem::path& path, const ClipArchive& archive);
ClipArchive load_archive(const std::filesystem::path& path);

}  // namespace tsgcn
