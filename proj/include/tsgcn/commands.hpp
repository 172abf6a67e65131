#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "tsgcn/archive.hpp"
#include "tsgcn/config.hpp"
#include "tsgcn/synth.hpp"
#include "tsgcn/train.hpp"

namespace tsgcn {

// Implementations behind the command-line subcommands. Each writes its
// human- or machine-readable summary to `out` and throws on any error.

struct LabelSummary {
  std::string label;
  std::size_t sequences = 0;
  std::size_t frames = 0;
  std::size_t invalid_frames = 0;
  std::size_t train_clips = 0;
  std::size_t test_clips = 0;
};

/// Loads, windows, normalizes and splits the manifest's sequences.
ClipArchive build_archive(const RunConfig& cfg, std::vector<LabelSummary>* summary = nullptr);

void run_ingest(const RunConfig& cfg, ReportFormat format, std::ostream& out);

/// The model a RunConfig describes for clips from `archive`.
ModelConfig model_config_for(const RunConfig& cfg, const ClipArchive& archive);

/// Returns the training history; writes checkpoint and history file.
std::vector<EpochRecord> run_train(const RunConfig& cfg, ReportFormat format, std::ostream& out);

/// Throws naming the first field where checkpoint and archive disagree.
void check_compatible(const ModelConfig& model, const ClipArchive& archive);

MetricsReport run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                       ReportFormat format, std::ostream& out);

void run_bench(const RunConfig& cfg, const std::filesystem::path& checkpoint, ReportFormat format,
               std::ostream& out);

struct GradcheckRow {
  std::string module;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
};

/// Per-module gradient check of the tiny model; true when every module is
/// below the configured tolerance.
bool run_gradcheck(const RunConfig& cfg, ReportFormat format, std::ostream& out,
                   std::vector<GradcheckRow>* rows = nullptr);

/// Architecture summary of a checkpoint plus the last training epoch if a
/// history file is present.
void run_report(const RunConfig& cfg, const std::filesystem::path& checkpoint, ReportFormat format,
                std::ostream& out);

struct SynthArgs {
  std::filesystem::path dir;
  std::size_t per_class = 50;
  SynthConfig synth;
};

/// Writes sequences.jsonl, manifest.csv and a matching config.json into dir.
void run_synth(const SynthArgs& args, std::ostream& out);

}  // namespace tsgcn
