// tsgcn: ingest skeleton data, train, evaluate, benchmark, gradient-check and
// summarize three-stream GSTCN models.

#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "tsgcn/commands.hpp"
#include "tsgcn/runtime.hpp"

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "text";
  std::vector<std::string> overrides;
};

tsgcn::RunConfig resolve_config(const GlobalOptions& g) {
  tsgcn::RunConfig cfg = g.config.empty() ? tsgcn::RunConfig{} : tsgcn::load_run_config(g.config);
  tsgcn::apply_overrides(cfg, g.overrides);
  if (g.seed) {
    cfg.train.seed = *g.seed;
    cfg.init_seed = *g.seed;
    cfg.data.split_seed = *g.seed;
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace tsgcn;
  configure_allocator();
  CLI::App app{"Three-stream GSTCN skeleton action classifier"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Seed for initialization, splitting and training");
  app.add_option("--out", g.out,
                 "Output location: archive file (ingest), run directory (train/eval), "
                 "dataset directory (synth)");
  app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"text", "machine"}));
  app.add_option("--set", g.overrides, "Override a config value: section.key=value");

  std::string manifest, layout, archive, checkpoint;
  std::size_t samples = 0;

  auto* ingest = app.add_subcommand("ingest", "Window, normalize and split a dataset manifest");
  ingest->add_option("--manifest", manifest, "Manifest CSV (path,label,id)");
  ingest->add_option("--layout", layout, "coco18, kinect20 or a layout file");

  auto* train_cmd = app.add_subcommand("train", "Train a model on a clip archive");
  train_cmd->add_option("--archive", archive, "Clip archive");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on an archive's test split");
  eval_cmd->add_option("--checkpoint", checkpoint, "Model checkpoint");
  eval_cmd->add_option("--archive", archive, "Clip archive");

  auto* bench = app.add_subcommand("bench", "Time inference against the dense-TCN variant");
  bench->add_option("--checkpoint", checkpoint, "Model checkpoint");
  bench->add_option("-n,--samples", samples, "Timed forwards per variant (>= 30)");

  app.add_subcommand("gradcheck", "Finite-difference check of every module of a tiny model");

  auto* report = app.add_subcommand("report", "Summarize a checkpoint and its training history");
  report->add_option("--checkpoint", checkpoint, "Model checkpoint");

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Write the two-class synthetic skeleton dataset");
  synth->add_option("--per-class", synth_args.per_class, "Sequences per class");
  synth->add_option("--frames", synth_args.synth.frames, "Frames per sequence");
  synth->add_option("--noise", synth_args.synth.joint_noise, "Joint noise standard deviation");
  synth->add_option("--invalid-rate", synth_args.synth.invalid_rate, "Fraction of invalid frames");

  CLI11_PARSE(app, argc, argv);

  try {
    const ReportFormat format = g.format == "machine" ? ReportFormat::machine : ReportFormat::text;
    RunConfig cfg = resolve_config(g);
    if (!archive.empty()) cfg.data.archive = archive;
    const auto checkpoint_path = [&] {
      return checkpoint.empty() ? cfg.checkpoint_path() : std::filesystem::path(checkpoint);
    };

    if (*ingest) {
      if (!manifest.empty()) cfg.data.manifest = manifest;
      if (!layout.empty()) cfg.data.layout = layout;
      if (!g.out.empty()) cfg.data.archive = g.out;
      run_ingest(cfg, format, std::cout);
    } else if (*synth) {
      synth_args.dir = g.out.empty() ? std::filesystem::path("synthetic") : std::filesystem::path(g.out);
      if (g.seed) synth_args.synth.seed = *g.seed;
      run_synth(synth_args, std::cout);
    } else {
      if (!g.out.empty()) cfg.output.dir = g.out;
      if (*train_cmd) {
        run_train(cfg, format, std::cout);
      } else if (*eval_cmd) {
        run_eval(cfg, checkpoint_path(), format, std::cout);
      } else if (*bench) {
        if (samples > 0) cfg.bench.samples = samples;
        run_bench(cfg, checkpoint_path(), format, std::cout);
      } else if (*report) {
        run_report(cfg, checkpoint_path(), format, std::cout);
      } else if (!run_gradcheck(cfg, format, std::cout)) {
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
