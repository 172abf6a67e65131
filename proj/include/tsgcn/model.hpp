#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tsgcn/layers.hpp"
#include "tsgcn/skeleton.hpp"

namespace tsgcn {

struct StreamSet {
  bool joint = true;
  bool motion = true;
  bool skip = true;

  std::size_t count() const { return std::size_t{joint} + motion + skip; }
  friend bool operator==(const StreamSet&, const StreamSet&) = default;
};

struct ModelConfig {
  JointLayout layout = coco18_layout();
  std::size_t dims = 2;
  std::size_t clip_len = 64;
  std::size_t num_classes = 2;
  std::vector<std::size_t> channels{64, 128};  // one width per GSTCN stage
  std::size_t head_hidden = 128;
  double dropout = 0.2;
  double mask_joint_p = 0.1;
  double mask_frame_p = 0.1;
  double layer_norm_eps = 1e-5;
  BlockOptions block;
  StreamSet streams;

  void validate() const;
  std::size_t final_channels() const { return channels.back(); }
  std::size_t feature_size() const { return final_channels() * streams.count(); }
};

std::string to_json_string(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

/// Frame differences along T: out[:, t, :] = clip[:, t, :] - clip[:, t-1, :] for
/// t >= 1, and zero at t = 0. Requires T >= 2.
Tensor compute_motion(const Tensor& clip);

/// FC -> ReLU -> LayerNorm -> Dropout -> FC; softmax is applied by callers.
class ClassifierHead {
 public:
  ClassifierHead(std::size_t features, std::size_t hidden, std::size_t classes, double dropout,
                 double ln_eps, std::mt19937_64& rng);

  Var logits(Tape& tape, const Var& features, bool training) const;

  Parameter fc1_weight;  // [F x H]
  Parameter fc1_bias;    // [H]
  Parameter ln_gamma;    // [H]
  Parameter ln_beta;     // [H]
  Parameter fc2_weight;  // [H x K]
  Parameter fc2_bias;    // [K]
  double dropout;
  double ln_eps;

  void collect(std::vector<Parameter*>& out);
};

/// Class probabilities from a pooled feature vector.
Tensor classifier_forward(const Tensor& features, const ClassifierHead& head, bool training,
                          std::uint64_t seed = 0);

struct ForwardOptions {
  bool training = false;
  /// Replaces one stream's pooled features with zeros (0 joint, 1 motion, 2 skip).
  int zero_stream = -1;
};

/// Multiply counts of one single-clip forward pass, by component.
struct FlopReport {
  std::uint64_t sgc = 0;
  std::uint64_t temporal = 0;
  std::uint64_t projection = 0;
  std::uint64_t skip = 0;
  std::uint64_t head = 0;

  std::uint64_t blocks() const { return sgc + temporal + projection; }
  std::uint64_t total() const { return blocks() + skip + head; }
};

/// Joint stream (GSTCN x2), motion stream (frame difference, GSTCN x2), and a
/// 1x1 skip projection of the raw clip; each globally average-pooled over
/// (T, V), concatenated, and classified.
class ThreeStreamModel {
 public:
  ThreeStreamModel(ModelConfig cfg, std::uint64_t seed);

  ThreeStreamModel(const ThreeStreamModel&) = delete;
  ThreeStreamModel& operator=(const ThreeStreamModel&) = delete;
  ThreeStreamModel(ThreeStreamModel&&) = default;
  ThreeStreamModel& operator=(ThreeStreamModel&&) = default;

  const ModelConfig& config() const { return cfg_; }

  /// Pre-softmax scores for one clip [dims x T x V]. Masking and dropout draw
  /// from tape.next_seed() when training.
  Var logits(Tape& tape, const Tensor& clip, const ForwardOptions& opts = {}) const;
  /// Pooled, concatenated stream features.
  Var features(Tape& tape, const Tensor& clip, const ForwardOptions& opts = {}) const;

  /// Class probabilities for one clip.
  Tensor forward(const Tensor& clip, bool training = false, std::uint64_t seed = 0) const;
  std::vector<Tensor> forward_batch(std::span<const Tensor> clips) const;
  std::size_t predict(const Tensor& clip) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::size_t count_parameters() const;
  FlopReport count_flops() const;

  std::vector<GstcnBlock>& joint_stream() { return joint_; }
  std::vector<GstcnBlock>& motion_stream() { return motion_; }
  const std::vector<GstcnBlock>& joint_stream() const { return joint_; }
  const std::vector<GstcnBlock>& motion_stream() const { return motion_; }
  std::optional<Conv1x1>& skip() { return skip_; }
  ClassifierHead& head() { return *head_; }
  const ClassifierHead& head() const { return *head_; }

 private:
  void check_input(const Tensor& clip) const;

  ModelConfig cfg_;
  std::vector<GstcnBlock> joint_;
  std::vector<GstcnBlock> motion_;
  std::optional<Conv1x1> skip_;
  std::unique_ptr<ClassifierHead> head_;
};

/// Same configuration with dense k x 1 temporal convolutions.
ModelConfig dense_variant(ModelConfig cfg);

// Model checkpoint: "TSGCMODL" | u32 version=1 | u32 config_len | config JSON |
// parameter block (see write_parameters).
void save_model(const std::filesystem::path& path, const ThreeStreamModel& model);
ThreeStreamModel load_model(const std::filesystem::path& path);

}  // namespace tsgcn
