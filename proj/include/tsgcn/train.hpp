#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tsgcn/model.hpp"
#include "tsgcn/skeleton.hpp"

namespace tsgcn {

struct Hyperparams {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;  // percent
};

/// Loss became non-finite during training.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t epoch, std::size_t batch, const std::string& detail);
  std::size_t epoch;  // 1-based
  std::size_t batch;  // 0-based within the epoch
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Mini-batch SGD with momentum on softmax cross-entropy. Batches are drawn from
/// a seeded shuffle each epoch; gradients are averaged over the batch (the last
/// batch may be smaller). The model after the final epoch is kept.
std::vector<EpochRecord> train(ThreeStreamModel& model, std::span<const SkeletonClip> train_set,
                               std::span<const SkeletonClip> val_set, const Hyperparams& hp,
                               const EpochCallback& on_epoch = {});

struct ConfusionMatrix {
  explicit ConfusionMatrix(std::size_t classes = 0) : classes(classes), counts(classes * classes, 0) {}

  std::size_t classes;
  std::vector<std::uint64_t> counts;  // row = true class, column = predicted

  std::uint64_t& at(std::size_t truth, std::size_t predicted) { return counts.at(truth * classes + predicted); }
  std::uint64_t at(std::size_t truth, std::size_t predicted) const { return counts.at(truth * classes + predicted); }
  std::uint64_t total() const;
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Argmax predictions with masking and dropout disabled.
ConfusionMatrix evaluate(const ThreeStreamModel& model, std::span<const SkeletonClip> test_set);

struct ClassMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  std::optional<double> precision;    // percent; empty when TP + FP = 0
  std::optional<double> sensitivity;  // percent; empty when TP + FN = 0
  std::optional<double> f1;           // percent; empty when TP + FP + FN = 0
};

struct MetricsReport {
  std::vector<ClassMetrics> per_class;
  double accuracy = 0.0;
  std::optional<double> macro_precision;
  std::optional<double> macro_sensitivity;
  std::optional<double> macro_f1;
  std::vector<std::string> warnings;
};

/// One-vs-rest counts per class, accuracy = trace / total, macro averages over
/// the classes where the value is defined.
MetricsReport compute_metrics(const ConfusionMatrix& cm);

enum class ReportFormat { text, machine };

/// Table with Precision, Sensitivity, F1-Score per class plus an Average row and
/// Accuracy, in percent with 2 decimals; `machine` emits JSON with full precision.
std::string format_report(const MetricsReport& report, std::span<const std::string> class_names,
                          ReportFormat format, const ConfusionMatrix* cm = nullptr);

/// Delimited history: header `epoch,train_loss,val_accuracy`.
void write_history_csv(std::ostream& os, std::span<const EpochRecord> history);

struct LatencySample {
  std::vector<double> samples_ms;
  double mean_ms = 0.0;
  double stddev_ms = 0.0;  // sample standard deviation

  static LatencySample from_samples(std::vector<double> samples_ms);
};

/// Times `n_samples` single-clip inference forwards after `n_warmup` untimed ones.
LatencySample benchmark_latency(const ThreeStreamModel& model, std::size_t n_warmup,
                                std::size_t n_samples, std::uint64_t seed = 0);

/// Same as benchmark_latency for two models, alternating a then b per trial on
/// the same input so both see the same machine conditions.
std::pair<LatencySample, LatencySample> benchmark_paired(const ThreeStreamModel& a,
                                                         const ThreeStreamModel& b,
                                                         std::size_t n_warmup, std::size_t n_samples,
                                                         std::uint64_t seed = 0);

struct WelchResult {
  double t = 0.0;
  double df = 0.0;
};

/// Unequal-variance two-sample t statistic (mean(a) - mean(b)) and the
/// Welch-Satterthwaite degrees of freedom.
WelchResult welch_t_test(std::span<const double> a, std::span<const double> b);

}  // namespace tsgcn
