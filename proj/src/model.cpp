#include "tsgcn/model.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "tsgcn/graph.hpp"
#include "tsgcn/optim.hpp"

namespace tsgcn {

using json = nlohmann::json;

void ModelConfig::validate() const {
  layout.validate(/*require_connected=*/false);
  if (dims != 2 && dims != 3) throw std::invalid_argument("model config: dims must be 2 or 3");
  if (clip_len < 2) throw std::invalid_argument("model config: clip_len must be at least 2");
  if (num_classes < 2) throw std::invalid_argument("model config: num_classes must be at least 2");
  if (channels.size() != 2) {
    throw std::invalid_argument("model config: channel plan must have exactly 2 stages per stream");
  }
  if (std::any_of(channels.begin(), channels.end(), [](std::size_t c) { return c == 0; }) ||
      head_hidden == 0) {
    throw std::invalid_argument("model config: channel widths must be positive");
  }
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("model config: dropout must lie in [0, 1)");
  if (mask_joint_p < 0.0 || mask_joint_p > 1.0 || mask_frame_p < 0.0 || mask_frame_p > 1.0) {
    throw std::invalid_argument("model config: masking probabilities must lie in [0, 1]");
  }
  if (block.temporal_kernel % 2 == 0) throw std::invalid_argument("model config: temporal kernel must be odd");
  if (streams.count() == 0) throw std::invalid_argument("model config: at least one stream must be enabled");
}

std::string to_json_string(const ModelConfig& cfg) {
  json edges = json::array();
  for (auto [a, b] : cfg.layout.edges) edges.push_back({a, b});
  json j = {
      {"layout", {{"name", cfg.layout.name}, {"joints", cfg.layout.joint_count},
                  {"root", cfg.layout.root_joint}, {"edges", edges}}},
      {"dims", cfg.dims},
      {"clip_len", cfg.clip_len},
      {"num_classes", cfg.num_classes},
      {"channels", cfg.channels},
      {"head_hidden", cfg.head_hidden},
      {"dropout", cfg.dropout},
      {"mask_joint_p", cfg.mask_joint_p},
      {"mask_frame_p", cfg.mask_frame_p},
      {"layer_norm_eps", cfg.layer_norm_eps},
      {"temporal_conv", cfg.block.temporal_conv == TemporalConvKind::dense ? "dense" : "separable"},
      {"temporal_kernel", cfg.block.temporal_kernel},
      {"temporal_pool_residual", cfg.block.temporal_pool_residual},
      {"spatial_pool_residual", cfg.block.spatial_pool_residual},
      {"streams", {{"joint", cfg.streams.joint}, {"motion", cfg.streams.motion}, {"skip", cfg.streams.skip}}},
  };
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  const json j = json::parse(text);
  ModelConfig cfg;
  const auto& l = j.at("layout");
  cfg.layout.name = l.at("name").get<std::string>();
  cfg.layout.joint_count = l.at("joints").get<std::size_t>();
  cfg.layout.root_joint = l.at("root").get<std::size_t>();
  cfg.layout.edges.clear();
  for (const auto& e : l.at("edges")) cfg.layout.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  cfg.dims = j.at("dims").get<std::size_t>();
  cfg.clip_len = j.at("clip_len").get<std::size_t>();
  cfg.num_classes = j.at("num_classes").get<std::size_t>();
  cfg.channels = j.at("channels").get<std::vector<std::size_t>>();
  cfg.head_hidden = j.at("head_hidden").get<std::size_t>();
  cfg.dropout = j.at("dropout").get<double>();
  cfg.mask_joint_p = j.at("mask_joint_p").get<double>();
  cfg.mask_frame_p = j.at("mask_frame_p").get<double>();
  cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
  cfg.block.temporal_conv =
      j.at("temporal_conv").get<std::string>() == "dense" ? TemporalConvKind::dense : TemporalConvKind::separable;
  cfg.block.temporal_kernel = j.at("temporal_kernel").get<std::size_t>();
  cfg.block.temporal_pool_residual = j.at("temporal_pool_residual").get<bool>();
  cfg.block.spatial_pool_residual = j.at("spatial_pool_residual").get<bool>();
  const auto& s = j.at("streams");
  cfg.streams = {s.at("joint").get<bool>(), s.at("motion").get<bool>(), s.at("skip").get<bool>()};
  cfg.validate();
  return cfg;
}

Tensor compute_motion(const Tensor& clip) {
  if (clip.rank() != 3) throw ShapeError("compute_motion: expected [dims x T x V], got " + to_string(clip.shape()));
  const std::size_t D = clip.dim(0), T = clip.dim(1), V = clip.dim(2);
  if (T < 2) throw std::invalid_argument("compute_motion: need at least 2 frames, got " + std::to_string(T));
  Tensor out(clip.shape());
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t t = 1; t < T; ++t)
      for (std::size_t v = 0; v < V; ++v) out(d, t, v) = clip(d, t, v) - clip(d, t - 1, v);
  return out;
}

namespace {

Var linear(Tape& tape, const Var& x, const Parameter& w, const Parameter& b) {
  const std::size_t in = w.value.dim(0), out = w.value.dim(1);
  if (x.shape() != Shape{in}) {
    throw ShapeError("linear: input " + to_string(x.shape()) + " vs weight " + to_string(w.value.shape()));
  }
  Var y = ops::matmul(ops::reshape(x, {1, in}), tape.param(w));
  return ops::add(ops::reshape(y, {out}), tape.param(b));
}

}  // namespace

ClassifierHead::ClassifierHead(std::size_t features, std::size_t hidden, std::size_t classes,
                               double dropout, double ln_eps, std::mt19937_64& rng)
    : fc1_weight("head.fc1.weight", init_uniform({features, hidden}, features, rng)),
      fc1_bias("head.fc1.bias", Tensor({hidden})),
      ln_gamma("head.norm.gamma", Tensor({hidden}, 1.0)),
      ln_beta("head.norm.beta", Tensor({hidden})),
      fc2_weight("head.fc2.weight", init_uniform({hidden, classes}, hidden, rng)),
      fc2_bias("head.fc2.bias", Tensor({classes})),
      dropout(dropout),
      ln_eps(ln_eps) {}

Var ClassifierHead::logits(Tape& tape, const Var& features, bool training) const {
  Var h = ops::relu(linear(tape, features, fc1_weight, fc1_bias));
  h = ops::layer_norm(h, tape.param(ln_gamma), tape.param(ln_beta), ln_eps);
  h = ops::dropout(h, dropout, training);
  return linear(tape, h, fc2_weight, fc2_bias);
}

void ClassifierHead::collect(std::vector<Parameter*>& out) {
  out.insert(out.end(), {&fc1_weight, &fc1_bias, &ln_gamma, &ln_beta, &fc2_weight, &fc2_bias});
}

Tensor classifier_forward(const Tensor& features, const ClassifierHead& head, bool training,
                          std::uint64_t seed) {
  Tape tape(seed);
  return ops::softmax(head.logits(tape, tape.constant(features), training)).value();
}

ThreeStreamModel::ThreeStreamModel(ModelConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  const Tensor adj = normalized_adjacency(cfg_.layout);
  auto build_stream = [&](const std::string& prefix) {
    std::vector<GstcnBlock> blocks;
    std::size_t c_in = cfg_.dims;
    for (std::size_t s = 0; s < cfg_.channels.size(); ++s) {
      blocks.emplace_back(prefix + std::to_string(s + 1), c_in, cfg_.channels[s], adj, cfg_.block, rng);
      c_in = cfg_.channels[s];
    }
    return blocks;
  };
  if (cfg_.streams.joint) joint_ = build_stream("joint.gstcn");
  if (cfg_.streams.motion) motion_ = build_stream("motion.gstcn");
  if (cfg_.streams.skip) skip_.emplace("skip.proj", cfg_.dims, cfg_.final_channels(), rng);
  head_ = std::make_unique<ClassifierHead>(cfg_.feature_size(), cfg_.head_hidden, cfg_.num_classes,
                                           cfg_.dropout, cfg_.layer_norm_eps, rng);
}

void ThreeStreamModel::check_input(const Tensor& clip) const {
  const Shape expected{cfg_.dims, cfg_.clip_len, cfg_.layout.joint_count};
  if (clip.shape() != expected) {
    throw ShapeError("model forward: clip shape " + to_string(clip.shape()) + ", expected " +
                     to_string(expected));
  }
}

Var ThreeStreamModel::features(Tape& tape, const Tensor& clip, const ForwardOptions& opts) const {
  check_input(clip);
  auto run_stream = [&](const std::vector<GstcnBlock>& blocks, Var x) {
    for (const auto& b : blocks) {
      MaskingConfig m{cfg_.mask_joint_p, cfg_.mask_frame_p, opts.training, 0};
      if (opts.training) m.seed = tape.next_seed();
      x = b.forward(tape, x, m);
    }
    return ops::global_avg_pool(x);
  };
  auto maybe_zero = [&](Var v, int index) {
    return opts.zero_stream == index ? ops::scale(v, 0.0) : v;
  };

  Var input = tape.constant(clip);
  std::vector<Var> parts;
  if (cfg_.streams.joint) parts.push_back(maybe_zero(run_stream(joint_, input), 0));
  if (cfg_.streams.motion) {
    parts.push_back(maybe_zero(run_stream(motion_, tape.constant(compute_motion(clip))), 1));
  }
  if (cfg_.streams.skip) parts.push_back(maybe_zero(ops::global_avg_pool(skip_->forward(tape, input)), 2));
  return ops::concat(parts);
}

Var ThreeStreamModel::logits(Tape& tape, const Tensor& clip, const ForwardOptions& opts) const {
  return head_->logits(tape, features(tape, clip, opts), opts.training);
}

Tensor ThreeStreamModel::forward(const Tensor& clip, bool training, std::uint64_t seed) const {
  Tape tape(seed);
  return ops::softmax(logits(tape, clip, {training, -1})).value();
}

std::vector<Tensor> ThreeStreamModel::forward_batch(std::span<const Tensor> clips) const {
  std::vector<Tensor> out;
  out.reserve(clips.size());
  for (const auto& c : clips) out.push_back(forward(c));
  return out;
}

std::size_t ThreeStreamModel::predict(const Tensor& clip) const {
  Tape tape;
  const auto& scores = logits(tape, clip).value();
  return static_cast<std::size_t>(
      std::max_element(scores.values().begin(), scores.values().end()) - scores.values().begin());
}

std::vector<Parameter*> ThreeStreamModel::parameters() {
  std::vector<Parameter*> out;
  for (auto& b : joint_) b.collect(out);
  for (auto& b : motion_) b.collect(out);
  if (skip_) skip_->collect(out);
  head_->collect(out);
  return out;
}

std::vector<const Parameter*> ThreeStreamModel::parameters() const {
  auto mutable_params = const_cast<ThreeStreamModel*>(this)->parameters();
  return {mutable_params.begin(), mutable_params.end()};
}

std::size_t ThreeStreamModel::count_parameters() const {
  std::size_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

FlopReport ThreeStreamModel::count_flops() const {
  FlopReport r;
  const std::uint64_t T = cfg_.clip_len, V = cfg_.layout.joint_count;
  auto add_blocks = [&](const std::vector<GstcnBlock>& blocks) {
    for (const auto& b : blocks) {
      const std::uint64_t ci = b.in_channels(), co = b.out_channels();
      r.sgc += ci * co * T * V + co * T * V * V;
      const auto tf = septcn_flops(co, co, T, V, b.options().temporal_kernel);
      r.temporal += b.options().temporal_conv == TemporalConvKind::dense ? tf.dense : tf.separable;
      if (b.projection) r.projection += ci * co * T * V;
    }
  };
  add_blocks(joint_);
  add_blocks(motion_);
  if (skip_) r.skip = static_cast<std::uint64_t>(cfg_.dims) * cfg_.final_channels() * T * V;
  r.head = static_cast<std::uint64_t>(cfg_.feature_size()) * cfg_.head_hidden +
           static_cast<std::uint64_t>(cfg_.head_hidden) * cfg_.num_classes;
  return r;
}

ModelConfig dense_variant(ModelConfig cfg) {
  cfg.block.temporal_conv = TemporalConvKind::dense;
  return cfg;
}

namespace {
constexpr char kModelMagic[8] = {'T', 'S', 'G', 'C', 'M', 'O', 'D', 'L'};
}

void save_model(const std::filesystem::path& path, const ThreeStreamModel& model) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path.string() + ": cannot open for writing");
  os.write(kModelMagic, sizeof(kModelMagic));
  const std::uint32_t version = 1;
  os.write(reinterpret_cast<const char*>(&version), sizeof(version));
  const auto cfg = to_json_string(model.config());
  const auto len = static_cast<std::uint32_t>(cfg.size());
  os.write(reinterpret_cast<const char*>(&len), sizeof(len));
  os.write(cfg.data(), len);
  write_parameters(os, model.parameters());
  if (!os) throw std::runtime_error(path.string() + ": write failed");
}

ThreeStreamModel load_model(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error(path.string() + ": cannot open checkpoint");
  char magic[8];
  std::uint32_t version = 0, len = 0;
  if (!is.read(magic, 8) || !std::equal(magic, magic + 8, kModelMagic)) {
    throw std::runtime_error(path.string() + ": not a model checkpoint");
  }
  is.read(reinterpret_cast<char*>(&version), sizeof(version));
  is.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!is || version != 1) throw std::runtime_error(path.string() + ": unsupported checkpoint version");
  std::string cfg_text(len, '\0');
  if (!is.read(cfg_text.data(), len)) throw std::runtime_error(path.string() + ": truncated config");
  ThreeStreamModel model(model_config_from_json(cfg_text), 0);
  auto stored = read_parameters(is);
  auto params = model.parameters();
  if (stored.size() != params.size()) {
    throw std::runtime_error(path.string() + ": checkpoint has " + std::to_string(stored.size()) +
                             " parameters, config implies " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (stored[i].name != params[i]->name || stored[i].value.shape() != params[i]->value.shape()) {
      throw std::runtime_error(path.string() + ": parameter " + stored[i].name + " " +
                               to_string(stored[i].value.shape()) + " does not match " +
                               params[i]->name + " " + to_string(params[i]->value.shape()));
    }
    params[i]->value = std::move(stored[i].value);
  }
  return model;
}

}  // namespace tsgcn
