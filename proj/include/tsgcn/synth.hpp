#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tsgcn/skeleton.hpp"

namespace tsgcn {

/// Two-class toy skeleton task on the COCO-18 layout, in body units (feet at
/// y = 0, neck near y = 1.5).
///   class 0 "fall": the body tips over about the feet, so the neck descends
///                   monotonically across the sequence.
///   class 1 "gait": upright body with sinusoidal arm and leg swing.
struct SynthConfig {
  std::size_t frames = 32;
  double joint_noise = 0.02;
  /// Fraction of frames flagged invalid (their coordinates are zeroed).
  double invalid_rate = 0.0;
  std::uint64_t seed = 0;
};

inline const std::vector<std::string>& synth_class_names() {
  static const std::vector<std::string> names{"fall", "gait"};
  return names;
}

/// One sequence of the given class; `index` selects an independent draw.
SkeletonSequence synth_sequence(std::size_t label, std::size_t index, const SynthConfig& cfg);

/// `per_class` sequences of each class, interleaved fall, gait, fall, ...
std::vector<SkeletonSequence> synth_dataset(std::size_t per_class, const SynthConfig& cfg);

/// Normalized clips of length cfg.frames, one per sequence.
std::vector<SkeletonClip> synth_clips(std::size_t per_class, const SynthConfig& cfg);

}  // namespace tsgcn
