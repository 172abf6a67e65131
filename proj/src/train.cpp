#include "tsgcn/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tsgcn/ops.hpp"
#include "tsgcn/optim.hpp"

namespace tsgcn {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double accuracy_percent(const ConfusionMatrix& cm) {
  std::uint64_t hits = 0;
  for (std::size_t k = 0; k < cm.classes; ++k) hits += cm.at(k, k);
  return 100.0 * static_cast<double>(hits) / static_cast<double>(cm.total());
}

void check_labels(std::span<const SkeletonClip> clips, std::size_t classes, const char* what) {
  for (const auto& c : clips) {
    if (c.label >= classes) {
      throw std::invalid_argument(std::string(what) + ": clip '" + c.sequence_id + "' has label " +
                                  std::to_string(c.label) + " but the model has " +
                                  std::to_string(classes) + " classes");
    }
  }
}

}  // namespace

DivergenceError::DivergenceError(std::size_t epoch, std::size_t batch, const std::string& detail)
    : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                         std::to_string(batch) + ": " + detail),
      epoch(epoch),
      batch(batch) {}

std::vector<EpochRecord> train(ThreeStreamModel& model, std::span<const SkeletonClip> train_set,
                               std::span<const SkeletonClip> val_set, const Hyperparams& hp,
                               const EpochCallback& on_epoch) {
  if (train_set.empty() || val_set.empty()) throw std::invalid_argument("train: empty train or validation split");
  if (hp.batch_size == 0 || hp.batch_size > train_set.size()) {
    throw std::invalid_argument("train: batch_size " + std::to_string(hp.batch_size) +
                                " must lie in [1, " + std::to_string(train_set.size()) + "]");
  }
  if (!(hp.learning_rate >= 0.0) || !(hp.momentum >= 0.0 && hp.momentum < 1.0)) {
    throw std::invalid_argument("train: learning_rate must be >= 0 and momentum in [0, 1)");
  }
  const std::size_t classes = model.config().num_classes;
  check_labels(train_set, classes, "train");
  check_labels(val_set, classes, "train");

  auto params = model.parameters();
  SgdMomentum sgd(params, hp.learning_rate, hp.momentum);
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const auto* p : params) grads.emplace_back(p->value.shape());

  std::vector<std::size_t> order(train_set.size());
  std::mt19937_64 shuffle_rng(splitmix(hp.seed));
  std::vector<EpochRecord> history;
  history.reserve(hp.epochs);

  for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += hp.batch_size, ++batch) {
      const std::size_t end = std::min(order.size(), start + hp.batch_size);
      for (auto& g : grads) g.fill(0.0);
      double batch_loss = 0.0;
      for (std::size_t i = start; i < end; ++i) {
        const auto& clip = train_set[order[i]];
        Tape tape(splitmix(hp.seed ^ splitmix(epoch * 0x100000000ULL + i)));
        double loss_value = 0.0;
        try {
          Var loss = ops::softmax_cross_entropy(model.logits(tape, clip.data, {true, -1}), clip.label);
          loss_value = loss.value()[0];
          tape.backward(loss);
        } catch (const NumericError& e) {
          throw DivergenceError(epoch, batch, e.what());
        }
        if (!std::isfinite(loss_value)) throw DivergenceError(epoch, batch, "loss is not finite");
        batch_loss += loss_value;
        for (std::size_t k = 0; k < params.size(); ++k) grads[k] += tape.param_grad(*params[k]);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      for (auto& g : grads) {
        for (double& v : g.values()) v *= inv;
        if (!g.all_finite()) throw DivergenceError(epoch, batch, "gradient is not finite");
      }
      sgd.step(grads);
      loss_sum += batch_loss;
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                    accuracy_percent(evaluate(model, val_set))};
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

ConfusionMatrix evaluate(const ThreeStreamModel& model, std::span<const SkeletonClip> test_set) {
  if (test_set.empty()) throw std::invalid_argument("evaluate: empty test set");
  const std::size_t classes = model.config().num_classes;
  check_labels(test_set, classes, "evaluate");
  ConfusionMatrix cm(classes);
  for (const auto& clip : test_set) ++cm.at(clip.label, model.predict(clip.data));
  return cm;
}

MetricsReport compute_metrics(const ConfusionMatrix& cm) {
  const std::size_t K = cm.classes;
  if (K == 0 || cm.counts.size() != K * K) throw std::invalid_argument("compute_metrics: empty confusion matrix");
  const std::uint64_t total = cm.total();
  if (total == 0) throw std::invalid_argument("compute_metrics: confusion matrix has no samples");

  MetricsReport r;
  r.accuracy = accuracy_percent(cm);
  double sums[3] = {0, 0, 0};
  std::size_t defined[3] = {0, 0, 0};
  for (std::size_t k = 0; k < K; ++k) {
    ClassMetrics m;
    m.tp = cm.at(k, k);
    for (std::size_t j = 0; j < K; ++j) {
      if (j == k) continue;
      m.fp += cm.at(j, k);
      m.fn += cm.at(k, j);
    }
    m.tn = total - m.tp - m.fp - m.fn;
    const double tp = static_cast<double>(m.tp), fp = static_cast<double>(m.fp),
                 fn = static_cast<double>(m.fn);
    if (m.tp + m.fp > 0) m.precision = 100.0 * tp / (tp + fp);
    if (m.tp + m.fn > 0) m.sensitivity = 100.0 * tp / (tp + fn);
    if (m.tp + m.fp + m.fn > 0) m.f1 = 100.0 * tp / (tp + 0.5 * (fp + fn));
    const std::optional<double>* values[3] = {&m.precision, &m.sensitivity, &m.f1};
    const char* names[3] = {"precision", "sensitivity", "F1"};
    for (int i = 0; i < 3; ++i) {
      if (*values[i]) {
        sums[i] += **values[i];
        ++defined[i];
      } else {
        r.warnings.push_back("class " + std::to_string(k) + ": " + names[i] +
                             " undefined (zero denominator), excluded from the macro average");
      }
    }
    r.per_class.push_back(m);
  }
  std::optional<double>* macros[3] = {&r.macro_precision, &r.macro_sensitivity, &r.macro_f1};
  for (int i = 0; i < 3; ++i) {
    if (defined[i] > 0) *macros[i] = sums[i] / static_cast<double>(defined[i]);
  }
  return r;
}

std::string format_report(const MetricsReport& report, std::span<const std::string> class_names,
                          ReportFormat format, const ConfusionMatrix* cm) {
  auto name_of = [&](std::size_t k) {
    return k < class_names.size() ? class_names[k] : "class" + std::to_string(k);
  };
  if (format == ReportFormat::machine) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["accuracy"] = report.accuracy;
    j["macro"] = {{"precision", opt(report.macro_precision)},
                  {"sensitivity", opt(report.macro_sensitivity)},
                  {"f1", opt(report.macro_f1)}};
    j["classes"] = nlohmann::json::array();
    for (std::size_t k = 0; k < report.per_class.size(); ++k) {
      const auto& m = report.per_class[k];
      j["classes"].push_back({{"label", name_of(k)}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn},
                              {"tn", m.tn}, {"precision", opt(m.precision)},
                              {"sensitivity", opt(m.sensitivity)}, {"f1", opt(m.f1)}});
    }
    if (cm) {
      j["confusion_matrix"] = nlohmann::json::array();
      for (std::size_t t = 0; t < cm->classes; ++t) {
        std::vector<std::uint64_t> row(cm->counts.begin() + static_cast<long>(t * cm->classes),
                                       cm->counts.begin() + static_cast<long>((t + 1) * cm->classes));
        j["confusion_matrix"].push_back(row);
      }
    }
    j["warnings"] = report.warnings;
    return j.dump(2) + "\n";
  }

  auto cell = [](const std::optional<double>& v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *v);
    return std::string(buf);
  };
  std::size_t width = 7;  // "Average"
  for (std::size_t k = 0; k < report.per_class.size(); ++k) width = std::max(width, name_of(k).size());
  std::ostringstream os;
  char line[256];
  auto row = [&](const std::string& label, const std::string& a, const std::string& p,
                 const std::string& s, const std::string& f) {
    std::snprintf(line, sizeof line, "%-*s  %12s  %13s  %15s  %14s\n", static_cast<int>(width),
                  label.c_str(), a.c_str(), p.c_str(), s.c_str(), f.c_str());
    os << line;
  };
  row("Label", "Accuracy [%]", "Precision [%]", "Sensitivity [%]", "F1-Score [%]");
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const auto& m = report.per_class[k];
    row(name_of(k), "n/a", cell(m.precision), cell(m.sensitivity), cell(m.f1));
  }
  row("Average", cell(report.accuracy), cell(report.macro_precision), cell(report.macro_sensitivity),
      cell(report.macro_f1));
  if (cm) {
    os << "\nConfusion matrix (rows = true, columns = predicted):\n";
    for (std::size_t t = 0; t < cm->classes; ++t) {
      std::snprintf(line, sizeof line, "%-*s", static_cast<int>(width), name_of(t).c_str());
      os << line;
      for (std::size_t p = 0; p < cm->classes; ++p) os << "  " << cm->at(t, p);
      os << "\n";
    }
  }
  for (const auto& w : report.warnings) os << "warning: " << w << "\n";
  return os.str();
}

void write_history_csv(std::ostream& os, std::span<const EpochRecord> history) {
  os << "epoch,train_loss,val_accuracy\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.epoch, r.train_loss, r.val_accuracy);
    os << buf;
  }
}

LatencySample LatencySample::from_samples(std::vector<double> samples_ms) {
  LatencySample s;
  s.samples_ms = std::move(samples_ms);
  const double n = static_cast<double>(s.samples_ms.size());
  if (s.samples_ms.empty()) return s;
  s.mean_ms = std::accumulate(s.samples_ms.begin(), s.samples_ms.end(), 0.0) / n;
  if (s.samples_ms.size() > 1) {
    double ss = 0.0;
    for (double v : s.samples_ms) ss += (v - s.mean_ms) * (v - s.mean_ms);
    s.stddev_ms = std::sqrt(ss / (n - 1.0));
  }
  return s;
}

namespace {

Tensor bench_input(const ModelConfig& cfg, std::uint64_t seed) {
  Tensor clip({cfg.dims, cfg.clip_len, cfg.layout.joint_count});
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  for (double& v : clip.values()) v = d(rng);
  return clip;
}

double time_forward(const ThreeStreamModel& model, const Tensor& clip) {
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor probs = model.forward(clip);
  const auto t1 = std::chrono::steady_clock::now();
  if (!probs.all_finite()) throw NumericError("benchmark: non-finite model output");
  return std::chrono::duration<double, std::milli>(t1 - t0).count();
}

void check_sample_count(std::size_t n) {
  if (n < 30) throw std::invalid_argument("benchmark: n_samples must be at least 30, got " + std::to_string(n));
}

}  // namespace

LatencySample benchmark_latency(const ThreeStreamModel& model, std::size_t n_warmup,
                                std::size_t n_samples, std::uint64_t seed) {
  check_sample_count(n_samples);
  const Tensor clip = bench_input(model.config(), seed);
  for (std::size_t i = 0; i < n_warmup; ++i) time_forward(model, clip);
  std::vector<double> samples;
  samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) samples.push_back(time_forward(model, clip));
  return LatencySample::from_samples(std::move(samples));
}

std::pair<LatencySample, LatencySample> benchmark_paired(const ThreeStreamModel& a,
                                                         const ThreeStreamModel& b,
                                                         std::size_t n_warmup, std::size_t n_samples,
                                                         std::uint64_t seed) {
  check_sample_count(n_samples);
  const auto& ca = a.config();
  const auto& cb = b.config();
  if (ca.dims != cb.dims || ca.clip_len != cb.clip_len || ca.layout.joint_count != cb.layout.joint_count) {
    throw std::invalid_argument("benchmark_paired: models take different input shapes");
  }
  const Tensor clip = bench_input(ca, seed);
  for (std::size_t i = 0; i < n_warmup; ++i) {
    time_forward(a, clip);
    time_forward(b, clip);
  }
  std::vector<double> sa, sb;
  sa.reserve(n_samples);
  sb.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    sa.push_back(time_forward(a, clip));
    sb.push_back(time_forward(b, clip));
  }
  return {LatencySample::from_samples(std::move(sa)), LatencySample::from_samples(std::move(sb))};
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("welch_t_test: each sample needs at least 2 values");
  auto moments = [](std::span<const double> s) {
    const double n = static_cast<double>(s.size());
    const double mean = std::accumulate(s.begin(), s.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : s) ss += (v - mean) * (v - mean);
    return std::pair{mean, ss / (n - 1.0)};
  };
  const auto [ma, va] = moments(a);
  const auto [mb, vb] = moments(b);
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double sa = va / na, sb = vb / nb;
  if (sa + sb == 0.0) {
    if (ma == mb) return {0.0, na + nb - 2.0};
    throw std::invalid_argument("welch_t_test: both samples have zero variance and different means");
  }
  WelchResult r;
  r.t = (ma - mb) / std::sqrt(sa + sb);
  r.df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
  return r;
}

}  // namespace tsgcn
