#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tsgcn/model.hpp"
#include "tsgcn/train.hpp"

namespace tsgcn {

/// Error in a run configuration; the message names the offending key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataSettings {
  std::filesystem::path manifest;
  std::string layout = "coco18";
  std::size_t clip_len = 64;
  std::size_t stride = 32;
  double train_fraction = 0.9;
  std::uint64_t split_seed = 0;
  std::filesystem::path archive = "clips.tsgc";
};

struct OutputSettings {
  std::filesystem::path dir = "run";
  std::string checkpoint = "model.tsgc";
  std::string history = "history.csv";
  std::string report = "report.txt";
};

struct BenchSettings {
  std::size_t warmup = 10;
  std::size_t samples = 100;
};

/// Tiny model used by the gradcheck command: a chain of `joints` joints.
struct GradcheckSettings {
  std::size_t joints = 5;
  std::size_t clip_len = 8;
  std::size_t dims = 2;
  std::vector<std::size_t> channels{8, 16};
  std::size_t classes = 2;
  double eps = 1e-6;
  double tolerance = 1e-4;
};

/// Everything a command needs. Sections and keys (JSON):
///   model:     channels, head_hidden, dropout, layer_norm_eps, temporal_conv
///              ("separable" | "dense"), temporal_kernel, temporal_pool_residual,
///              spatial_pool_residual, streams (subset of ["joint","motion","skip"]),
///              init_seed
///   masking:   p_joint, p_frame
///   train:     learning_rate, momentum, batch_size, epochs, seed
///   data:      manifest, layout, clip_len, stride, train_fraction, split_seed, archive
///   output:    dir, checkpoint, history, report
///   bench:     warmup, samples
///   gradcheck: joints, clip_len, dims, channels, classes, eps, tolerance
/// Relative paths in a file resolve against the file's directory.
struct RunConfig {
  ModelConfig model;  // layout, dims, clip_len and num_classes come from the data
  std::uint64_t init_seed = 0;
  Hyperparams train;
  DataSettings data;
  OutputSettings output;
  BenchSettings bench;
  GradcheckSettings gradcheck;

  std::filesystem::path checkpoint_path() const { return output.dir / output.checkpoint; }
  std::filesystem::path history_path() const { return output.dir / output.history; }
  std::filesystem::path report_path() const { return output.dir / output.report; }
};

/// Serializes every key with its current value.
std::string to_json_string(const RunConfig& cfg, int indent = 2);

/// Parses a config document on top of the defaults. Unknown keys and
/// ill-typed values raise ConfigError naming the key.
RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Applies "section.key=value" overrides; the value is read as JSON, falling
/// back to a plain string.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

/// The model configuration the gradcheck command builds.
ModelConfig gradcheck_model_config(const RunConfig& cfg);

}  // namespace tsgcn
