#include "tsgcn/commands.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>

#include "json.hpp"
#include "tsgcn/gradcheck.hpp"
#include "tsgcn/ops.hpp"

namespace tsgcn {

using json = nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void ensure_parent(const std::filesystem::path& p) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
}

}  // namespace

ClipArchive build_archive(const RunConfig& cfg, std::vector<LabelSummary>* summary) {
  if (cfg.data.manifest.empty()) throw ConfigError("config key 'data.manifest' is not set");
  if (cfg.data.stride == 0) throw ConfigError("config key 'data.stride' must be positive");
  const JointLayout layout = resolve_layout(cfg.data.layout);
  const DatasetManifest manifest = load_manifest(cfg.data.manifest);
  const auto sequences = load_sequences(manifest, layout);

  std::vector<LabelSummary> rows(manifest.class_names.size());
  for (std::size_t k = 0; k < rows.size(); ++k) rows[k].label = manifest.class_names[k];

  ClipArchive archive;
  archive.layout = layout;
  archive.clip_len = cfg.data.clip_len;
  archive.class_names = manifest.class_names;
  archive.dims = sequences.empty() ? 0 : sequences.front().dims();

  std::vector<SkeletonClip> clips;
  for (const auto& seq : sequences) {
    if (seq.dims() != archive.dims) {
      throw IngestError("sequence '" + seq.id + "' has " + std::to_string(seq.dims()) +
                        "-d joints, earlier sequences have " + std::to_string(archive.dims));
    }
    auto& row = rows.at(seq.label);
    ++row.sequences;
    row.frames += seq.frames.size();
    const auto valid = drop_invalid_frames(seq);
    row.invalid_frames += seq.frames.size() - valid.frames.size();
    if (valid.frames.empty()) throw IngestError("sequence '" + seq.id + "' has no valid frames");
    for (const auto& clip : window_sequence(valid, cfg.data.clip_len, cfg.data.stride)) {
      clips.push_back(normalize_clip(clip, layout));
    }
  }
  auto split = split_dataset(clips, cfg.data.train_fraction, cfg.data.split_seed, manifest.class_names);
  for (const auto& c : split.train) ++rows[c.label].train_clips;
  for (const auto& c : split.test) ++rows[c.label].test_clips;
  archive.train = std::move(split.train);
  archive.test = std::move(split.test);
  if (summary) *summary = std::move(rows);
  return archive;
}

void run_ingest(const RunConfig& cfg, ReportFormat format, std::ostream& out) {
  std::vector<LabelSummary> rows;
  const ClipArchive archive = build_archive(cfg, &rows);
  ensure_parent(cfg.data.archive);
  save_archive(cfg.data.archive, archive);

  LabelSummary total{"Total"};
  for (const auto& r : rows) {
    total.sequences += r.sequences;
    total.frames += r.frames;
    total.invalid_frames += r.invalid_frames;
    total.train_clips += r.train_clips;
    total.test_clips += r.test_clips;
  }
  if (format == ReportFormat::machine) {
    json j = {{"archive", cfg.data.archive.string()}, {"labels", json::array()}};
    for (const auto& r : rows) {
      j["labels"].push_back({{"label", r.label}, {"sequences", r.sequences}, {"frames", r.frames},
                             {"invalid_frames", r.invalid_frames},
                             {"retained_frames", r.frames - r.invalid_frames},
                             {"train_clips", r.train_clips}, {"test_clips", r.test_clips}});
    }
    out << j.dump(2) << "\n";
    return;
  }
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %9s %9s %9s %9s %11s %10s\n", "Label", "Sequences", "Frames",
                "Invalid", "Retained", "Train clips", "Test clips");
  out << line;
  rows.push_back(total);
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-16s %9zu %9zu %9zu %9zu %11zu %10zu\n", r.label.c_str(),
                  r.sequences, r.frames, r.invalid_frames, r.frames - r.invalid_frames, r.train_clips,
                  r.test_clips);
    out << line;
  }
  out << "archive: " << cfg.data.archive.string() << "\n";
}

ModelConfig model_config_for(const RunConfig& cfg, const ClipArchive& archive) {
  ModelConfig m = cfg.model;
  m.layout = archive.layout;
  m.dims = archive.dims;
  m.clip_len = archive.clip_len;
  m.num_classes = archive.class_names.size();
  m.validate();
  return m;
}

std::vector<EpochRecord> run_train(const RunConfig& cfg, ReportFormat format, std::ostream& out) {
  const ClipArchive archive = load_archive(cfg.data.archive);
  ThreeStreamModel model(model_config_for(cfg, archive), cfg.init_seed);
  const bool text = format == ReportFormat::text;
  if (text) {
    out << "model: " << model.count_parameters() << " parameters, "
        << model.count_flops().total() << " multiplies per clip\n";
    out << "train clips: " << archive.train.size() << ", validation clips: " << archive.test.size() << "\n";
  }
  std::vector<EpochRecord> history;
  if (cfg.train.epochs > 0) {
    history = train(model, archive.train, archive.test, cfg.train, [&](const EpochRecord& r) {
      if (text) {
        out << "epoch " << r.epoch << "  loss " << fmt("%.6f", r.train_loss) << "  val accuracy "
            << fmt("%.2f", r.val_accuracy) << "\n";
        out.flush();
      }
    });
  }
  std::filesystem::create_directories(cfg.output.dir);
  save_model(cfg.checkpoint_path(), model);
  {
    std::ofstream hs(cfg.history_path());
    if (!hs) throw std::runtime_error(cfg.history_path().string() + ": cannot open for writing");
    write_history_csv(hs, history);
  }
  if (text) {
    if (!history.empty()) out << "final val accuracy: " << fmt("%.2f", history.back().val_accuracy) << "\n";
    out << "checkpoint: " << cfg.checkpoint_path().string() << "\n";
    out << "history: " << cfg.history_path().string() << "\n";
  } else {
    json j = {{"checkpoint", cfg.checkpoint_path().string()},
              {"history", cfg.history_path().string()},
              {"epochs", history.size()}};
    j["final_val_accuracy"] = history.empty() ? json(nullptr) : json(history.back().val_accuracy);
    j["final_train_loss"] = history.empty() ? json(nullptr) : json(history.back().train_loss);
    out << j.dump(2) << "\n";
  }
  return history;
}

void check_compatible(const ModelConfig& model, const ClipArchive& archive) {
  auto fail = [](const std::string& field, const std::string& a, const std::string& b) {
    throw ConfigError("checkpoint/archive mismatch in " + field + ": checkpoint has " + a +
                      ", archive has " + b);
  };
  if (model.layout.name != archive.layout.name) fail("layout", model.layout.name, archive.layout.name);
  if (model.layout.joint_count != archive.layout.joint_count || model.layout.edges != archive.layout.edges) {
    fail("layout graph", std::to_string(model.layout.joint_count) + " joints",
         std::to_string(archive.layout.joint_count) + " joints");
  }
  if (model.dims != archive.dims) fail("dims", std::to_string(model.dims), std::to_string(archive.dims));
  if (model.clip_len != archive.clip_len) {
    fail("clip_len", std::to_string(model.clip_len), std::to_string(archive.clip_len));
  }
  if (model.num_classes != archive.class_names.size()) {
    fail("num_classes", std::to_string(model.num_classes), std::to_string(archive.class_names.size()));
  }
}

MetricsReport run_eval(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                       ReportFormat format, std::ostream& out) {
  const ThreeStreamModel model = load_model(checkpoint);
  const ClipArchive archive = load_archive(cfg.data.archive);
  check_compatible(model.config(), archive);
  const ConfusionMatrix cm = evaluate(model, archive.test);
  const MetricsReport report = compute_metrics(cm);
  const std::string text = format_report(report, archive.class_names, format, &cm);
  out << text;
  std::filesystem::create_directories(cfg.output.dir);
  std::ofstream rs(cfg.report_path());
  if (!rs) throw std::runtime_error(cfg.report_path().string() + ": cannot open for writing");
  rs << text;
  return report;
}

void run_bench(const RunConfig& cfg, const std::filesystem::path& checkpoint, ReportFormat format,
               std::ostream& out) {
  const ThreeStreamModel separable = load_model(checkpoint);
  const ThreeStreamModel dense(dense_variant(separable.config()), cfg.init_seed);
  const auto [ls, ld] = benchmark_paired(separable, dense, cfg.bench.warmup, cfg.bench.samples, cfg.train.seed);
  const WelchResult w = welch_t_test(ls.samples_ms, ld.samples_ms);
  struct Row {
    const char* name;
    const ThreeStreamModel* model;
    const LatencySample* lat;
  };
  const Row rows[2] = {{"Sep-TCN model", &separable, &ls}, {"Dense-TCN variant", &dense, &ld}};
  if (format == ReportFormat::machine) {
    json j = {{"samples", cfg.bench.samples}, {"warmup", cfg.bench.warmup}, {"rows", json::array()}};
    for (const auto& r : rows) {
      j["rows"].push_back({{"method", r.name}, {"mean_ms", r.lat->mean_ms}, {"std_ms", r.lat->stddev_ms},
                           {"parameters", r.model->count_parameters()},
                           {"flops", r.model->count_flops().total()}});
    }
    j["welch"] = {{"t", w.t}, {"df", w.df}};
    out << j.dump(2) << "\n";
    return;
  }
  char line[256];
  std::snprintf(line, sizeof line, "%-18s %10s %24s %11s %14s\n", "Method Name", "Mean [ms]",
                "Standard Deviation [ms]", "Parameters", "FLOPs");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-18s %10.4f %24.4f %11zu %14llu\n", r.name, r.lat->mean_ms,
                  r.lat->stddev_ms, r.model->count_parameters(),
                  static_cast<unsigned long long>(r.model->count_flops().total()));
    out << line;
  }
  out << "samples per variant: " << cfg.bench.samples << " (warmup " << cfg.bench.warmup
      << ", interleaved)\n";
  out << "Welch t (Sep-TCN minus dense): " << fmt("%.4f", w.t) << ", df " << fmt("%.2f", w.df) << "\n";
}

bool run_gradcheck(const RunConfig& cfg, ReportFormat format, std::ostream& out,
                   std::vector<GradcheckRow>* rows_out) {
  const ModelConfig mc = gradcheck_model_config(cfg);
  ThreeStreamModel model(mc, cfg.init_seed);
  Tensor clip({mc.dims, mc.clip_len, mc.layout.joint_count});
  std::mt19937_64 rng(cfg.train.seed);
  std::normal_distribution<double> d(0.0, 1.0);
  for (double& v : clip.values()) v = d(rng);
  const ScalarFn loss = [&](Tape& tape) {
    return ops::softmax_cross_entropy(model.logits(tape, clip, {true, -1}), 1);
  };

  std::map<std::string, std::vector<Parameter*>> groups;
  std::vector<std::string> order;
  for (auto* p : model.parameters()) {
    const std::string module = p->name.substr(0, p->name.rfind('.'));
    if (!groups.count(module)) order.push_back(module);
    groups[module].push_back(p);
  }
  std::vector<GradcheckRow> rows;
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckRow overall{"model", 0, 0.0};
  for (const auto& module : order) {
    const auto r = grad_check(loss, groups[module], cfg.gradcheck.eps);
    rows.push_back({module, r.coordinates, r.max_rel_error});
    overall.coordinates += r.coordinates;
    overall.max_rel_error = std::max(overall.max_rel_error, r.max_rel_error);
  }
  rows.push_back(overall);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool pass = overall.max_rel_error < cfg.gradcheck.tolerance;

  if (format == ReportFormat::machine) {
    json j = {{"tolerance", cfg.gradcheck.tolerance}, {"pass", pass}, {"seconds", seconds},
              {"modules", json::array()}};
    for (const auto& r : rows) {
      j["modules"].push_back({{"module", r.module}, {"coordinates", r.coordinates},
                              {"max_rel_error", r.max_rel_error}});
    }
    out << j.dump(2) << "\n";
  } else {
    char line[256];
    std::snprintf(line, sizeof line, "%-26s %11s %14s\n", "Module", "Coordinates", "Max rel error");
    out << line;
    for (const auto& r : rows) {
      std::snprintf(line, sizeof line, "%-26s %11zu %14.3e%s\n", r.module.c_str(), r.coordinates,
                    r.max_rel_error, r.max_rel_error < cfg.gradcheck.tolerance ? "" : "  FAIL");
      out << line;
    }
    out << (pass ? "PASS" : "FAIL") << ": tolerance " << fmt("%.0e", cfg.gradcheck.tolerance) << ", "
        << fmt("%.2f", seconds) << " s\n";
  }
  if (rows_out) *rows_out = std::move(rows);
  return pass;
}

void run_report(const RunConfig& cfg, const std::filesystem::path& checkpoint, ReportFormat format,
                std::ostream& out) {
  const ThreeStreamModel model = load_model(checkpoint);
  const ThreeStreamModel dense(dense_variant(model.config()), 0);
  const auto& mc = model.config();
  const FlopReport f = model.count_flops(), fd = dense.count_flops();

  std::map<std::string, std::size_t> per_module;
  std::vector<std::string> order;
  for (const auto* p : model.parameters()) {
    const std::string top = p->name.substr(0, p->name.find('.', p->name.find('.') + 1));
    if (!per_module.count(top)) order.push_back(top);
    per_module[top] += p->value.size();
  }
  std::vector<EpochRecord> history;
  if (std::ifstream hs(cfg.history_path()); hs) {
    std::string line;
    std::getline(hs, line);
    while (std::getline(hs, line)) {
      EpochRecord r;
      if (std::sscanf(line.c_str(), "%zu,%lf,%lf", &r.epoch, &r.train_loss, &r.val_accuracy) == 3) {
        history.push_back(r);
      }
    }
  }

  if (format == ReportFormat::machine) {
    json j = json::parse(to_json_string(mc));
    json report = {{"config", j}, {"parameters", model.count_parameters()},
                   {"dense_parameters", dense.count_parameters()}};
    report["flops"] = {{"sgc", f.sgc}, {"temporal", f.temporal}, {"projection", f.projection},
                       {"skip", f.skip}, {"head", f.head}, {"total", f.total()}};
    report["dense_flops"] = fd.total();
    report["modules"] = json::object();
    for (const auto& m : order) report["modules"][m] = per_module[m];
    if (!history.empty()) {
      report["last_epoch"] = {{"epoch", history.back().epoch}, {"train_loss", history.back().train_loss},
                              {"val_accuracy", history.back().val_accuracy}};
    }
    out << report.dump(2) << "\n";
    return;
  }
  out << "layout " << mc.layout.name << " (" << mc.layout.joint_count << " joints), dims " << mc.dims
      << ", clip_len " << mc.clip_len << ", classes " << mc.num_classes << "\n";
  out << "streams:";
  if (mc.streams.joint) out << " joint";
  if (mc.streams.motion) out << " motion";
  if (mc.streams.skip) out << " skip";
  out << "; channels";
  for (auto c : mc.channels) out << " " << c;
  out << "; temporal conv "
      << (mc.block.temporal_conv == TemporalConvKind::dense ? "dense" : "separable") << " k="
      << mc.block.temporal_kernel << "\n\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-20s %12s\n", "Module", "Parameters");
  out << line;
  for (const auto& m : order) {
    std::snprintf(line, sizeof line, "%-20s %12zu\n", m.c_str(), per_module[m]);
    out << line;
  }
  std::snprintf(line, sizeof line, "%-20s %12zu\n\n", "Total", model.count_parameters());
  out << line;
  std::snprintf(line, sizeof line, "%-20s %14s %14s\n", "Multiplies", "This model", "Dense TCN");
  out << line;
  const std::pair<const char*, std::pair<std::uint64_t, std::uint64_t>> frows[] = {
      {"SGC", {f.sgc, fd.sgc}},         {"Temporal conv", {f.temporal, fd.temporal}},
      {"Projection", {f.projection, fd.projection}}, {"Skip", {f.skip, fd.skip}},
      {"Head", {f.head, fd.head}},      {"Total", {f.total(), fd.total()}}};
  for (const auto& [name, v] : frows) {
    std::snprintf(line, sizeof line, "%-20s %14llu %14llu\n", name, static_cast<unsigned long long>(v.first),
                  static_cast<unsigned long long>(v.second));
    out << line;
  }
  if (!history.empty()) {
    out << "\nlast epoch " << history.back().epoch << ": loss " << fmt("%.6f", history.back().train_loss)
        << ", val accuracy " << fmt("%.2f", history.back().val_accuracy) << "\n";
  }
}

void run_synth(const SynthArgs& args, std::ostream& out) {
  if (args.dir.empty()) throw std::invalid_argument("synth: output directory not set");
  std::filesystem::create_directories(args.dir);
  const auto sequences = synth_dataset(args.per_class, args.synth);
  const auto& names = synth_class_names();
  {
    std::ofstream os(args.dir / "sequences.jsonl");
    for (const auto& s : sequences) os << format_sequence_record(s, names) << "\n";
    if (!os) throw std::runtime_error((args.dir / "sequences.jsonl").string() + ": write failed");
  }
  {
    std::ofstream os(args.dir / "manifest.csv");
    os << "path,label,id\n";
    for (const auto& s : sequences) os << "sequences.jsonl," << names[s.label] << "," << s.id << "\n";
  }
  RunConfig cfg;
  cfg.data.manifest = "manifest.csv";
  cfg.data.clip_len = args.synth.frames;
  cfg.data.stride = args.synth.frames;
  cfg.data.train_fraction = 0.8;
  cfg.data.archive = "clips.tsgc";
  cfg.output.dir = "run";
  {
    std::ofstream os(args.dir / "config.json");
    os << to_json_string(cfg) << "\n";
  }
  out << "wrote " << sequences.size() << " sequences (" << args.per_class << " per class) to "
      << args.dir.string() << "\n";
}

}  // namespace tsgcn
