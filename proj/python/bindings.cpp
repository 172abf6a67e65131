#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "tsgcn/commands.hpp"
#include "tsgcn/graph.hpp"
#include "tsgcn/model.hpp"
#include "tsgcn/synth.hpp"
#include "tsgcn/train.hpp"

namespace py = pybind11;
using namespace tsgcn;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
  Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

ConfusionMatrix to_confusion(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 2 || a.shape(0) != a.shape(1)) throw std::invalid_argument("confusion matrix must be square");
  ConfusionMatrix cm(static_cast<std::size_t>(a.shape(0)));
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] < 0) throw std::invalid_argument("confusion matrix counts must be non-negative");
    cm.counts[static_cast<std::size_t>(i)] = static_cast<std::uint64_t>(a.data()[i]);
  }
  return cm;
}

py::dict metrics_dict(const MetricsReport& r) {
  auto opt = [](const std::optional<double>& v) -> py::object { return v ? py::object(py::float_(*v)) : py::object(py::none()); };
  py::list classes;
  for (const auto& m : r.per_class) {
    py::dict d;
    d["tp"] = m.tp;
    d["fp"] = m.fp;
    d["fn"] = m.fn;
    d["tn"] = m.tn;
    d["precision"] = opt(m.precision);
    d["sensitivity"] = opt(m.sensitivity);
    d["f1"] = opt(m.f1);
    classes.append(d);
  }
  py::dict out;
  out["classes"] = classes;
  out["accuracy"] = r.accuracy;
  out["macro_precision"] = opt(r.macro_precision);
  out["macro_sensitivity"] = opt(r.macro_sensitivity);
  out["macro_f1"] = opt(r.macro_f1);
  out["warnings"] = r.warnings;
  return out;
}

ModelConfig make_config(const std::string& layout, std::size_t dims, std::size_t clip_len,
                        std::size_t num_classes, std::vector<std::size_t> channels,
                        std::size_t head_hidden, const std::string& temporal_conv,
                        std::vector<std::string> streams, double mask_p) {
  ModelConfig cfg;
  cfg.layout = resolve_layout(layout);
  cfg.dims = dims;
  cfg.clip_len = clip_len;
  cfg.num_classes = num_classes;
  cfg.channels = std::move(channels);
  cfg.head_hidden = head_hidden;
  if (temporal_conv == "dense") cfg.block.temporal_conv = TemporalConvKind::dense;
  else if (temporal_conv != "separable") throw std::invalid_argument("temporal_conv must be 'separable' or 'dense'");
  cfg.streams = {false, false, false};
  for (const auto& s : streams) {
    if (s == "joint") cfg.streams.joint = true;
    else if (s == "motion") cfg.streams.motion = true;
    else if (s == "skip") cfg.streams.skip = true;
    else throw std::invalid_argument("unknown stream '" + s + "'");
  }
  cfg.mask_joint_p = cfg.mask_frame_p = mask_p;
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Three-stream GSTCN skeleton classifier core";

  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<IngestError>(m, "IngestError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

  py::class_<ModelConfig>(m, "ModelConfig")
      .def(py::init(&make_config), py::arg("layout") = "coco18", py::arg("dims") = 2,
           py::arg("clip_len") = 64, py::arg("num_classes") = 2,
           py::arg("channels") = std::vector<std::size_t>{64, 128}, py::arg("head_hidden") = 128,
           py::arg("temporal_conv") = "separable",
           py::arg("streams") = std::vector<std::string>{"joint", "motion", "skip"},
           py::arg("mask_p") = 0.1)
      .def_readonly("dims", &ModelConfig::dims)
      .def_readonly("clip_len", &ModelConfig::clip_len)
      .def_readonly("num_classes", &ModelConfig::num_classes)
      .def_readonly("channels", &ModelConfig::channels)
      .def_property_readonly("joints", [](const ModelConfig& c) { return c.layout.joint_count; })
      .def("to_json", [](const ModelConfig& c) { return to_json_string(c); })
      .def("dense_variant", [](const ModelConfig& c) { return dense_variant(c); });

  py::class_<ThreeStreamModel>(m, "ThreeStreamModel")
      .def(py::init<ModelConfig, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
      .def_property_readonly("config", &ThreeStreamModel::config)
      .def("forward", [](const ThreeStreamModel& self, const Array& clip, bool training, std::uint64_t seed) {
             return to_array(self.forward(to_tensor(clip), training, seed));
           }, py::arg("clip"), py::arg("training") = false, py::arg("seed") = 0,
           "Class probabilities for one clip of shape (dims, T, joints).")
      .def("predict", [](const ThreeStreamModel& self, const Array& clip) { return self.predict(to_tensor(clip)); })
      .def("count_parameters", &ThreeStreamModel::count_parameters)
      .def("count_flops", [](const ThreeStreamModel& self) {
        const auto f = self.count_flops();
        py::dict d;
        d["sgc"] = f.sgc;
        d["temporal"] = f.temporal;
        d["projection"] = f.projection;
        d["skip"] = f.skip;
        d["head"] = f.head;
        d["total"] = f.total();
        return d;
      })
      .def("parameters", [](ThreeStreamModel& self) {
        py::dict d;
        for (const auto* p : self.parameters()) d[py::str(p->name)] = to_array(p->value);
        return d;
      })
      .def("save", [](const ThreeStreamModel& self, const std::filesystem::path& p) { save_model(p, self); });

  m.def("load_model", &load_model, py::arg("path"));
  m.def("compute_motion", [](const Array& clip) { return to_array(compute_motion(to_tensor(clip))); });
  m.def("normalized_adjacency", [](const std::string& layout) {
    return to_array(normalized_adjacency(resolve_layout(layout)));
  }, py::arg("layout"));
  m.def("septcn_flops", [](std::size_t cin, std::size_t cout, std::size_t k) {
    const auto f = septcn_flops(cin, cout, 1, 1, k);
    return py::make_tuple(f.separable_per_position, f.dense_per_position);
  }, py::arg("c_in"), py::arg("c_out"), py::arg("k") = 3,
     "Per-position multiply counts (separable, dense) of a k x 1 temporal convolution.");
  m.def("compute_metrics", [](const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& cm) {
    return metrics_dict(compute_metrics(to_confusion(cm)));
  }, py::arg("confusion"));
  m.def("welch_t_test", [](const std::vector<double>& a, const std::vector<double>& b) {
    const auto r = welch_t_test(a, b);
    return py::make_tuple(r.t, r.df);
  });
  m.def("synth_clips", [](std::size_t per_class, std::size_t frames, std::uint64_t seed) {
    SynthConfig cfg;
    cfg.frames = frames;
    cfg.seed = seed;
    py::list clips, labels;
    for (const auto& c : synth_clips(per_class, cfg)) {
      clips.append(to_array(c.data));
      labels.append(c.label);
    }
    return py::make_tuple(clips, labels);
  }, py::arg("per_class"), py::arg("frames") = 32, py::arg("seed") = 0);
  m.def("evaluate", [](const ThreeStreamModel& model, const std::vector<Array>& clips,
                       const std::vector<std::size_t>& labels) {
    if (clips.size() != labels.size()) throw std::invalid_argument("clips and labels differ in length");
    std::vector<SkeletonClip> set;
    for (std::size_t i = 0; i < clips.size(); ++i) set.push_back({to_tensor(clips[i]), labels[i], "", 0});
    const auto cm = evaluate(model, set);
    py::array_t<std::uint64_t> out({cm.classes, cm.classes});
    std::copy(cm.counts.begin(), cm.counts.end(), out.mutable_data());
    return out;
  });
  m.def("gradcheck", []() {
    std::ostringstream sink;
    std::vector<GradcheckRow> rows;
    const bool pass = run_gradcheck(RunConfig{}, ReportFormat::text, sink, &rows);
    py::dict errors;
    for (const auto& r : rows) errors[py::str(r.module)] = r.max_rel_error;
    return py::make_tuple(pass, errors);
  }, "Gradient check of the tiny default model; returns (passed, {module: max relative error}).");
}
