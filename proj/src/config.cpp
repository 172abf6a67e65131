#include "tsgcn/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace tsgcn {

using json = nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
  json streams = json::array();
  if (c.model.streams.joint) streams.push_back("joint");
  if (c.model.streams.motion) streams.push_back("motion");
  if (c.model.streams.skip) streams.push_back("skip");
  const auto& m = c.model;
  return {
      {"model",
       {{"channels", m.channels},
        {"head_hidden", m.head_hidden},
        {"dropout", m.dropout},
        {"layer_norm_eps", m.layer_norm_eps},
        {"temporal_conv", m.block.temporal_conv == TemporalConvKind::dense ? "dense" : "separable"},
        {"temporal_kernel", m.block.temporal_kernel},
        {"temporal_pool_residual", m.block.temporal_pool_residual},
        {"spatial_pool_residual", m.block.spatial_pool_residual},
        {"streams", streams},
        {"init_seed", c.init_seed}}},
      {"masking", {{"p_joint", m.mask_joint_p}, {"p_frame", m.mask_frame_p}}},
      {"train",
       {{"learning_rate", c.train.learning_rate},
        {"momentum", c.train.momentum},
        {"batch_size", c.train.batch_size},
        {"epochs", c.train.epochs},
        {"seed", c.train.seed}}},
      {"data",
       {{"manifest", c.data.manifest.string()},
        {"layout", c.data.layout},
        {"clip_len", c.data.clip_len},
        {"stride", c.data.stride},
        {"train_fraction", c.data.train_fraction},
        {"split_seed", c.data.split_seed},
        {"archive", c.data.archive.string()}}},
      {"output",
       {{"dir", c.output.dir.string()},
        {"checkpoint", c.output.checkpoint},
        {"history", c.output.history},
        {"report", c.output.report}}},
      {"bench", {{"warmup", c.bench.warmup}, {"samples", c.bench.samples}}},
      {"gradcheck",
       {{"joints", c.gradcheck.joints},
        {"clip_len", c.gradcheck.clip_len},
        {"dims", c.gradcheck.dims},
        {"channels", c.gradcheck.channels},
        {"classes", c.gradcheck.classes},
        {"eps", c.gradcheck.eps},
        {"tolerance", c.gradcheck.tolerance}}},
  };
}

template <typename T>
void read(const json& j, const char* section, const char* key, T& out) {
  try {
    out = j.at(section).at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + section + "." + key + "': " + e.what());
  }
}

RunConfig from_json(const json& j) {
  RunConfig c;
  auto& m = c.model;
  read(j, "model", "channels", m.channels);
  read(j, "model", "head_hidden", m.head_hidden);
  read(j, "model", "dropout", m.dropout);
  read(j, "model", "layer_norm_eps", m.layer_norm_eps);
  std::string conv;
  read(j, "model", "temporal_conv", conv);
  if (conv == "dense") m.block.temporal_conv = TemporalConvKind::dense;
  else if (conv == "separable") m.block.temporal_conv = TemporalConvKind::separable;
  else throw ConfigError("config key 'model.temporal_conv': expected \"separable\" or \"dense\", got \"" + conv + "\"");
  read(j, "model", "temporal_kernel", m.block.temporal_kernel);
  read(j, "model", "temporal_pool_residual", m.block.temporal_pool_residual);
  read(j, "model", "spatial_pool_residual", m.block.spatial_pool_residual);
  std::vector<std::string> streams;
  read(j, "model", "streams", streams);
  m.streams = {false, false, false};
  for (const auto& s : streams) {
    if (s == "joint") m.streams.joint = true;
    else if (s == "motion") m.streams.motion = true;
    else if (s == "skip") m.streams.skip = true;
    else throw ConfigError("config key 'model.streams': unknown stream \"" + s + "\"");
  }
  read(j, "model", "init_seed", c.init_seed);
  read(j, "masking", "p_joint", m.mask_joint_p);
  read(j, "masking", "p_frame", m.mask_frame_p);
  read(j, "train", "learning_rate", c.train.learning_rate);
  read(j, "train", "momentum", c.train.momentum);
  read(j, "train", "batch_size", c.train.batch_size);
  read(j, "train", "epochs", c.train.epochs);
  read(j, "train", "seed", c.train.seed);
  std::string path;
  read(j, "data", "manifest", path);
  c.data.manifest = path;
  read(j, "data", "layout", c.data.layout);
  read(j, "data", "clip_len", c.data.clip_len);
  read(j, "data", "stride", c.data.stride);
  read(j, "data", "train_fraction", c.data.train_fraction);
  read(j, "data", "split_seed", c.data.split_seed);
  read(j, "data", "archive", path);
  c.data.archive = path;
  read(j, "output", "dir", path);
  c.output.dir = path;
  read(j, "output", "checkpoint", c.output.checkpoint);
  read(j, "output", "history", c.output.history);
  read(j, "output", "report", c.output.report);
  read(j, "bench", "warmup", c.bench.warmup);
  read(j, "bench", "samples", c.bench.samples);
  read(j, "gradcheck", "joints", c.gradcheck.joints);
  read(j, "gradcheck", "clip_len", c.gradcheck.clip_len);
  read(j, "gradcheck", "dims", c.gradcheck.dims);
  read(j, "gradcheck", "channels", c.gradcheck.channels);
  read(j, "gradcheck", "classes", c.gradcheck.classes);
  read(j, "gradcheck", "eps", c.gradcheck.eps);
  read(j, "gradcheck", "tolerance", c.gradcheck.tolerance);
  return c;
}

// Copies `src` into `dst`, which holds the complete key set.
void merge(json& dst, const json& src, const std::string& prefix) {
  if (!src.is_object()) {
    throw ConfigError("config " + (prefix.empty() ? std::string("document") : "key '" + prefix + "'") +
                      ": expected an object");
  }
  for (const auto& [key, value] : src.items()) {
    const std::string name = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError("unknown config key '" + name + "'");
    if (dst[key].is_object()) merge(dst[key], value, name);
    else dst[key] = value;
  }
}

}  // namespace

std::string to_json_string(const RunConfig& cfg, int indent) { return to_json(cfg).dump(indent); }

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  json merged = to_json(RunConfig{});
  merge(merged, doc, "");
  RunConfig cfg = from_json(merged);
  if (!base_dir.empty()) {
    auto resolve = [&](std::filesystem::path& p, const char* section, const char* key) {
      if (doc.contains(section) && doc[section].contains(key) && !p.empty() && p.is_relative()) {
        p = base_dir / p;
      }
    };
    resolve(cfg.data.manifest, "data", "manifest");
    resolve(cfg.data.archive, "data", "archive");
    resolve(cfg.output.dir, "output", "dir");
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open config");
  std::stringstream ss;
  ss << is.rdbuf();
  try {
    return parse_run_config(ss.str(), path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
  json merged = to_json(cfg);
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    const auto dot = a.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
      throw ConfigError("override '" + a + "': expected section.key=value");
    }
    const std::string section = a.substr(0, dot), key = a.substr(dot + 1, eq - dot - 1);
    const std::string raw = a.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::parse_error&) {
      value = raw;
    }
    merge(merged, json{{section, json{{key, value}}}}, "");
  }
  cfg = from_json(merged);
}

ModelConfig gradcheck_model_config(const RunConfig& cfg) {
  const auto& g = cfg.gradcheck;
  ModelConfig m = cfg.model;
  m.layout.name = "chain" + std::to_string(g.joints);
  m.layout.joint_count = g.joints;
  m.layout.root_joint = 0;
  m.layout.edges.clear();
  for (std::size_t v = 1; v < g.joints; ++v) m.layout.edges.emplace_back(v - 1, v);
  m.dims = g.dims;
  m.clip_len = g.clip_len;
  m.channels = g.channels;
  m.num_classes = g.classes;
  m.head_hidden = g.channels.empty() ? 1 : g.channels.back();
  return m;
}

}  // namespace tsgcn
