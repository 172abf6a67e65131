#include "tsgcn/synth.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace tsgcn {

namespace {

using Point = std::array<double, 2>;

// Standing pose, COCO-18 order.
constexpr std::array<Point, 18> kStanding{{
    {0.00, 1.70}, {0.00, 1.50},                             // nose, neck
    {-0.20, 1.50}, {-0.25, 1.20}, {-0.25, 0.95},            // right arm
    {0.20, 1.50}, {0.25, 1.20}, {0.25, 0.95},               // left arm
    {-0.10, 0.95}, {-0.10, 0.50}, {-0.10, 0.05},            // right leg
    {0.10, 0.95}, {0.10, 0.50}, {0.10, 0.05},               // left leg
    {-0.04, 1.74}, {0.04, 1.74}, {-0.08, 1.72}, {0.08, 1.72},  // eyes, ears
}};

Point rotate_about(Point p, Point c, double angle) {
  const double s = std::sin(angle), co = std::cos(angle);
  const double dx = p[0] - c[0], dy = p[1] - c[1];
  return {c[0] + co * dx - s * dy, c[1] + s * dx + co * dy};
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::array<Point, 18> gait_pose(double phase, double arm_amp, double leg_amp) {
  auto pose = kStanding;
  const double swing = std::sin(phase);
  // Right arm and left leg swing together, opposite the other pair.
  for (std::size_t j : {3, 4}) pose[j] = rotate_about(pose[j], kStanding[2], arm_amp * swing);
  for (std::size_t j : {6, 7}) pose[j] = rotate_about(pose[j], kStanding[5], -arm_amp * swing);
  for (std::size_t j : {9, 10}) pose[j] = rotate_about(pose[j], kStanding[8], -leg_amp * swing);
  for (std::size_t j : {12, 13}) pose[j] = rotate_about(pose[j], kStanding[11], leg_amp * swing);
  const double bob = 0.02 * std::cos(2.0 * phase);
  for (auto& p : pose) p[1] += bob;
  return pose;
}

}  // namespace

SkeletonSequence synth_sequence(std::size_t label, std::size_t index, const SynthConfig& cfg) {
  if (label > 1) throw std::invalid_argument("synth_sequence: label must be 0 or 1");
  if (cfg.frames < 2) throw std::invalid_argument("synth_sequence: need at least 2 frames");
  if (cfg.invalid_rate < 0.0 || cfg.invalid_rate >= 1.0) {
    throw std::invalid_argument("synth_sequence: invalid_rate must lie in [0, 1)");
  }
  std::mt19937_64 rng(mix(cfg.seed ^ mix(2 * index + label)));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, cfg.joint_noise);

  const double scale = 0.9 + 0.2 * u(rng);
  const double shift_x = -0.5 + u(rng);
  const double T = static_cast<double>(cfg.frames);

  // fall parameters
  const double direction = u(rng) < 0.5 ? -1.0 : 1.0;
  const double start_angle = 0.2 * u(rng);
  const double end_angle = 1.2 + 0.3 * u(rng);
  // gait parameters
  const double cycles = 1.0 + 1.5 * u(rng);
  const double phase0 = 2.0 * std::numbers::pi * u(rng);
  const double arm_amp = 0.3 + 0.3 * u(rng);
  const double leg_amp = 0.25 + 0.25 * u(rng);

  SkeletonSequence seq;
  seq.id = synth_class_names()[label] + "_" + std::to_string(index);
  seq.label = label;
  seq.layout = "coco18";
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    const double s = static_cast<double>(t) / (T - 1.0);
    std::array<Point, 18> pose;
    if (label == 0) {
      const double ease = s * s * (3.0 - 2.0 * s);
      const double angle = direction * (start_angle + (end_angle - start_angle) * ease);
      for (std::size_t j = 0; j < 18; ++j) pose[j] = rotate_about(kStanding[j], {0.0, 0.0}, angle);
    } else {
      pose = gait_pose(phase0 + 2.0 * std::numbers::pi * cycles * s, arm_amp, leg_amp);
    }
    SkeletonFrame frame{Tensor({18, 2}), u(rng) >= cfg.invalid_rate};
    for (std::size_t j = 0; j < 18; ++j) {
      const double x = scale * pose[j][0] + shift_x + noise(rng);
      const double y = scale * pose[j][1] + noise(rng);
      if (frame.valid) {
        frame.coords(j, 0) = x;
        frame.coords(j, 1) = y;
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

std::vector<SkeletonSequence> synth_dataset(std::size_t per_class, const SynthConfig& cfg) {
  std::vector<SkeletonSequence> out;
  out.reserve(2 * per_class);
  for (std::size_t i = 0; i < per_class; ++i) {
    out.push_back(synth_sequence(0, i, cfg));
    out.push_back(synth_sequence(1, i, cfg));
  }
  return out;
}

std::vector<SkeletonClip> synth_clips(std::size_t per_class, const SynthConfig& cfg) {
  const auto layout = coco18_layout();
  std::vector<SkeletonClip> clips;
  clips.reserve(2 * per_class);
  for (const auto& seq : synth_dataset(per_class, cfg)) {
    const auto valid = drop_invalid_frames(seq);
    auto windows = window_sequence(valid, cfg.frames, cfg.frames);
    clips.push_back(normalize_clip(windows.front(), layout));
  }
  return clips;
}

}  // namespace tsgcn
