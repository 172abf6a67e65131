#include "tsgcn/skeleton.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <unordered_map>
#include <sstream>

#include "json.hpp"

namespace tsgcn {

using json = nlohmann::json;

void JointLayout::validate(bool require_connected) const {
  if (joint_count == 0) throw std::invalid_argument("layout " + name + ": joint_count must be positive");
  if (root_joint >= joint_count) {
    throw std::invalid_argument("layout " + name + ": root joint " + std::to_string(root_joint) +
                                " out of range");
  }
  std::set<Edge> seen;
  for (auto [a, b] : edges) {
    if (a >= joint_count || b >= joint_count) {
      throw std::invalid_argument("layout " + name + ": edge " + std::to_string(a) + "-" +
                                  std::to_string(b) + " out of range");
    }
    if (a == b) throw std::invalid_argument("layout " + name + ": self-edge on joint " + std::to_string(a));
    if (!seen.insert(std::minmax(a, b)).second) {
      throw std::invalid_argument("layout " + name + ": duplicate edge " + std::to_string(a) + "-" +
                                  std::to_string(b));
    }
  }
  if (require_connected && !connected()) {
    throw std::invalid_argument("layout " + name + ": edges do not form a single connected component");
  }
}

bool JointLayout::connected() const {
  if (joint_count == 0) return false;
  std::vector<std::size_t> parent(joint_count);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::size_t components = joint_count;
  for (auto [a, b] : edges) {
    auto ra = find(a), rb = find(b);
    if (ra != rb) {
      parent[ra] = rb;
      --components;
    }
  }
  return components == 1;
}

JointLayout coco18_layout() {
  // 0 nose, 1 neck, 2-4 right arm, 5-7 left arm, 8-10 right leg, 11-13 left leg,
  // 14/15 eyes, 16/17 ears.
  return {"coco18", 18,
          {{4, 3}, {3, 2}, {7, 6}, {6, 5}, {13, 12}, {12, 11}, {10, 9}, {9, 8}, {11, 5},
           {8, 2}, {5, 1}, {2, 1}, {0, 1}, {15, 0}, {14, 0}, {17, 15}, {16, 14}},
          1};
}

JointLayout kinect20_layout() {
  // 0 hip center, 1 spine, 2 shoulder center, 3 head, 4-7 left arm, 8-11 right arm,
  // 12-15 left leg, 16-19 right leg.
  return {"kinect20", 20,
          {{0, 1}, {1, 2}, {2, 3}, {2, 4}, {4, 5}, {5, 6}, {6, 7}, {2, 8}, {8, 9}, {9, 10},
           {10, 11}, {0, 12}, {12, 13}, {13, 14}, {14, 15}, {0, 16}, {16, 17}, {17, 18},
           {18, 19}},
          0};
}

JointLayout parse_layout(std::istream& is, const std::string& source) {
  JointLayout layout;
  bool have_name = false, have_count = false, have_root = false;
  std::string line;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    auto fail = [&](const std::string& what) {
      throw IngestError(source + ":" + std::to_string(lineno) + ": " + what);
    };
    if (key == "name") {
      if (!(ls >> layout.name)) fail("missing layout name");
      have_name = true;
    } else if (key == "joints") {
      if (!(ls >> layout.joint_count)) fail("bad joint count");
      have_count = true;
    } else if (key == "root") {
      if (!(ls >> layout.root_joint)) fail("bad root joint");
      have_root = true;
    } else if (key == "edge") {
      std::size_t a = 0, b = 0;
      if (!(ls >> a >> b)) fail("edge needs two joint indices");
      layout.edges.emplace_back(a, b);
    } else {
      fail("unknown key '" + key + "'");
    }
    std::string extra;
    if (ls >> extra) fail("trailing text '" + extra + "'");
  }
  if (!have_name || !have_count || !have_root) {
    throw IngestError(source + ": layout requires name, joints and root");
  }
  try {
    layout.validate();
  } catch (const std::invalid_argument& e) {
    throw IngestError(source + ": " + e.what());
  }
  return layout;
}

JointLayout load_layout_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string() + ": cannot open layout file");
  return parse_layout(in, path.string());
}

void write_layout(std::ostream& os, const JointLayout& layout) {
  os << "name " << layout.name << "\njoints " << layout.joint_count << "\nroot "
     << layout.root_joint << '\n';
  for (auto [a, b] : layout.edges) os << "edge " << a << ' ' << b << '\n';
}

JointLayout resolve_layout(const std::string& name_or_path) {
  if (name_or_path == "coco18") return coco18_layout();
  if (name_or_path == "kinect20") return kinect20_layout();
  return load_layout_file(name_or_path);
}

std::size_t DatasetManifest::class_index(const std::string& label) const {
  auto it = std::find(class_names.begin(), class_names.end(), label);
  if (it == class_names.end()) throw std::out_of_range("unknown class label '" + label + "'");
  return static_cast<std::size_t>(it - class_names.begin());
}

namespace {

std::string trim(std::string s) {
  auto ws = [](unsigned char c) { return std::isspace(c); };
  s.erase(s.begin(), std::find_if_not(s.begin(), s.end(), ws));
  s.erase(std::find_if_not(s.rbegin(), s.rend(), ws).base(), s.end());
  return s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ls(line);
  while (std::getline(ls, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

DatasetManifest parse_manifest(std::istream& is, const std::filesystem::path& base_dir,
                               const std::string& source) {
  DatasetManifest m;
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  std::set<std::string> ids;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split_csv(line);
    auto where = source + ":" + std::to_string(lineno);
    if (!header) {
      if (fields != std::vector<std::string>{"path", "label", "id"}) {
        throw IngestError(where + ": expected header 'path,label,id'");
      }
      header = true;
      continue;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      throw IngestError(where + ": expected 3 non-empty fields path,label,id");
    }
    if (!ids.insert(fields[2]).second) throw IngestError(where + ": duplicate id '" + fields[2] + "'");
    std::filesystem::path p(fields[0]);
    if (p.is_relative()) p = base_dir / p;
    if (std::find(m.class_names.begin(), m.class_names.end(), fields[1]) == m.class_names.end()) {
      m.class_names.push_back(fields[1]);
    }
    m.entries.push_back({p, fields[1], fields[2]});
  }
  if (!header) throw IngestError(source + ": missing header row 'path,label,id'");
  return m;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError(path.string() + ": cannot open manifest");
  return parse_manifest(in, path.parent_path(), path.string());
}

SkeletonSequence parse_sequence_record(const std::string& line, const JointLayout& layout,
                                       const std::string& where) {
  json rec;
  try {
    rec = json::parse(line);
  } catch (const json::parse_error& e) {
    throw IngestError(where + ": malformed record: " + e.what());
  }
  auto fail = [&](const std::string& what) -> IngestError { return IngestError(where + ": " + what); };
  if (!rec.is_object()) throw fail("record must be a JSON object");
  for (auto it = rec.begin(); it != rec.end(); ++it) {
    if (it.key() != "id" && it.key() != "label" && it.key() != "frames") {
      throw fail("unknown field '" + it.key() + "'");
    }
  }
  if (!rec.contains("id") || !rec["id"].is_string()) throw fail("missing string field 'id'");
  if (!rec.contains("label") || !rec["label"].is_string()) throw fail("missing string field 'label'");
  if (!rec.contains("frames") || !rec["frames"].is_array()) throw fail("missing array field 'frames'");

  SkeletonSequence seq;
  seq.id = rec["id"].get<std::string>();
  seq.layout = layout.name;
  std::size_t dims = 0;
  std::vector<std::pair<json, bool>> raw;
  const auto& frames = rec["frames"];
  for (std::size_t f = 0; f < frames.size(); ++f) {
    const auto& fr = frames[f];
    json joints;
    bool valid = true;
    if (fr.is_array()) {
      joints = fr;
    } else if (fr.is_object()) {
      for (auto it = fr.begin(); it != fr.end(); ++it) {
        if (it.key() != "joints" && it.key() != "valid") {
          throw fail("frame " + std::to_string(f) + ": unknown field '" + it.key() + "'");
        }
      }
      joints = fr.value("joints", json::array());
      if (fr.contains("valid")) {
        if (!fr["valid"].is_boolean()) throw fail("frame " + std::to_string(f) + ": 'valid' must be boolean");
        valid = fr["valid"].get<bool>();
      }
    } else {
      throw fail("frame " + std::to_string(f) + " must be an array or object");
    }
    if (!joints.is_array()) throw fail("frame " + std::to_string(f) + ": joints must be an array");
    if (!joints.empty() || valid) {
      if (joints.size() != layout.joint_count) {
        throw fail("frame " + std::to_string(f) + " has " + std::to_string(joints.size()) +
                   " joints, layout " + layout.name + " expects " + std::to_string(layout.joint_count));
      }
      for (const auto& j : joints) {
        if (!j.is_array() || (j.size() != 2 && j.size() != 3)) {
          throw fail("frame " + std::to_string(f) + ": each joint must be [x, y] or [x, y, z]");
        }
        if (dims == 0) dims = j.size();
        if (j.size() != dims) {
          throw fail("frame " + std::to_string(f) + ": mixed 2-D and 3-D joints");
        }
      }
    }
    raw.emplace_back(std::move(joints), valid);
  }
  if (dims == 0) dims = 2;
  for (std::size_t f = 0; f < raw.size(); ++f) {
    SkeletonFrame frame{Tensor({layout.joint_count, dims}), raw[f].second};
    const auto& joints = raw[f].first;
    for (std::size_t v = 0; v < joints.size(); ++v) {
      for (std::size_t d = 0; d < dims; ++d) {
        const auto& x = joints[v][d];
        if (!x.is_number()) throw fail("frame " + std::to_string(f) + ": non-numeric coordinate");
        const double val = x.get<double>();
        if (!std::isfinite(val)) throw fail("frame " + std::to_string(f) + ": non-finite coordinate");
        frame.coords(v, d) = val;
      }
    }
    seq.frames.push_back(std::move(frame));
  }
  return seq;
}

std::string format_sequence_record(const SkeletonSequence& seq,
                                   std::span<const std::string> class_names) {
  json frames = json::array();
  for (const auto& f : seq.frames) {
    json joints = json::array();
    for (std::size_t v = 0; v < f.coords.dim(0); ++v) {
      json j = json::array();
      for (std::size_t d = 0; d < f.coords.dim(1); ++d) j.push_back(f.coords(v, d));
      joints.push_back(std::move(j));
    }
    if (f.valid) frames.push_back(std::move(joints));
    else frames.push_back({{"joints", std::move(joints)}, {"valid", false}});
  }
  json rec = {{"id", seq.id}, {"label", class_names[seq.label]}, {"frames", std::move(frames)}};
  return rec.dump();
}

std::vector<SkeletonSequence> load_sequences(const DatasetManifest& manifest,
                                             const JointLayout& layout) {
  struct Record {
    SkeletonSequence seq;
    std::string label;
    std::string where;
  };
  // Each file is parsed once; the first record with a given id wins.
  std::map<std::filesystem::path, std::unordered_map<std::string, Record>> files;
  auto file_records = [&](const std::filesystem::path& path) -> const auto& {
    if (auto it = files.find(path); it != files.end()) return it->second;
    std::ifstream in(path);
    if (!in) throw IngestError(path.string() + ": cannot open sequence file");
    std::unordered_map<std::string, Record> records;
    std::string line;
    for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
      if (trim(line).empty()) continue;
      auto where = path.string() + ":" + std::to_string(lineno);
      auto seq = parse_sequence_record(line, layout, where);
      auto label = json::parse(line)["label"].get<std::string>();
      auto id = seq.id;
      records.try_emplace(id, Record{std::move(seq), std::move(label), std::move(where)});
    }
    return files.emplace(path, std::move(records)).first->second;
  };

  std::vector<SkeletonSequence> out;
  for (const auto& e : manifest.entries) {
    const auto& records = file_records(e.path);
    auto it = records.find(e.id);
    if (it == records.end()) throw IngestError(e.path.string() + ": no record with id '" + e.id + "'");
    const auto& rec = it->second;
    if (rec.label != e.label) {
      throw IngestError(rec.where + ": record label '" + rec.label + "' disagrees with manifest label '" +
                        e.label + "'");
    }
    out.push_back(rec.seq);
    out.back().label = manifest.class_index(e.label);
  }
  return out;
}

SkeletonSequence drop_invalid_frames(const SkeletonSequence& seq) {
  SkeletonSequence out{seq.id, seq.label, {}, seq.layout};
  std::copy_if(seq.frames.begin(), seq.frames.end(), std::back_inserter(out.frames),
               [](const SkeletonFrame& f) { return f.valid; });
  return out;
}

std::vector<SkeletonClip> window_sequence(const SkeletonSequence& seq, std::size_t clip_len,
                                          std::size_t stride) {
  if (clip_len < 2) throw std::invalid_argument("window_sequence: clip_len must be at least 2");
  if (stride < 1) throw std::invalid_argument("window_sequence: stride must be positive");
  if (seq.frames.empty()) throw std::invalid_argument("window_sequence: sequence '" + seq.id + "' is empty");
  const std::size_t L = seq.frames.size();
  const std::size_t V = seq.frames.front().coords.dim(0);
  const std::size_t D = seq.frames.front().coords.dim(1);

  std::vector<std::size_t> starts;
  if (L < clip_len) starts.push_back(0);
  for (std::size_t s = 0; L >= clip_len && s + clip_len <= L; s += stride) starts.push_back(s);

  std::vector<SkeletonClip> clips;
  for (auto start : starts) {
    SkeletonClip clip{Tensor({D, clip_len, V}), seq.label, seq.id, start};
    for (std::size_t t = 0; t < clip_len; ++t) {
      const auto& f = seq.frames[std::min(start + t, L - 1)].coords;
      for (std::size_t d = 0; d < D; ++d)
        for (std::size_t v = 0; v < V; ++v) clip.data(d, t, v) = f(v, d);
    }
    clips.push_back(std::move(clip));
  }
  return clips;
}

SkeletonClip normalize_clip(const SkeletonClip& clip, const JointLayout& layout) {
  SkeletonClip out = clip;
  auto& x = out.data;
  const std::size_t D = x.dim(0), T = x.dim(1), V = x.dim(2);
  if (V != layout.joint_count) {
    throw ShapeError("normalize_clip: clip has " + std::to_string(V) + " joints, layout " +
                     layout.name + " has " + std::to_string(layout.joint_count));
  }
  const std::size_t r = layout.root_joint;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      const double root = x(d, t, r);
      for (std::size_t v = 0; v < V; ++v) x(d, t, v) -= root;
    }
    double max_dist = 0.0;
    for (std::size_t v = 0; v < V; ++v) {
      double sq = 0.0;
      for (std::size_t d = 0; d < D; ++d) sq += x(d, t, v) * x(d, t, v);
      max_dist = std::max(max_dist, std::sqrt(sq));
    }
    if (max_dist < 1e-8) continue;
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t v = 0; v < V; ++v) x(d, t, v) /= max_dist;
  }
  return out;
}

DatasetSplit split_dataset(std::span<const SkeletonClip> clips, double train_fraction,
                           std::uint64_t seed, std::span<const std::string> class_names) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw std::invalid_argument("split_dataset: train_fraction must lie in (0, 1)");
  }
  std::size_t num_classes = class_names.size();
  for (const auto& c : clips) num_classes = std::max(num_classes, c.label + 1);
  auto class_name = [&](std::size_t k) {
    return k < class_names.size() ? "'" + class_names[k] + "'" : std::to_string(k);
  };

  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < clips.size(); ++i) by_class[clips[i].label].push_back(i);

  std::mt19937_64 rng(seed);
  std::vector<bool> in_train(clips.size(), false);
  for (std::size_t k = 0; k < num_classes; ++k) {
    auto& idx = by_class[k];
    if (idx.size() < 2) {
      throw std::invalid_argument("split_dataset: class " + class_name(k) + " has " +
                                  std::to_string(idx.size()) + " clip(s); at least 2 are required");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, idx.size() - 1);
    for (std::size_t j = 0; j < n_train; ++j) in_train[idx[j]] = true;
  }
  DatasetSplit split;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    (in_train[i] ? split.train : split.test).push_back(clips[i]);
  }
  return split;
}

}  // namespace tsgcn
