#include "tsgcn/layers.hpp"

#include <cmath>

namespace tsgcn {

Tensor masking_pattern(const Shape& shape, const MaskingConfig& cfg) {
  if (shape.size() != 3) throw ShapeError("apply_masking: expected [C x T x V], got " + to_string(shape));
  if (cfg.p_joint < 0.0 || cfg.p_joint > 1.0 || cfg.p_frame < 0.0 || cfg.p_frame > 1.0) {
    throw std::invalid_argument("apply_masking: probabilities must lie in [0, 1]");
  }
  const std::size_t C = shape[0], T = shape[1], V = shape[2];
  std::mt19937_64 rng(cfg.seed);
  std::bernoulli_distribution drop_joint(cfg.p_joint), drop_frame(cfg.p_frame);
  std::vector<bool> joint_off(V), frame_off(T);
  for (std::size_t v = 0; v < V; ++v) joint_off[v] = drop_joint(rng);
  for (std::size_t t = 0; t < T; ++t) frame_off[t] = drop_frame(rng);
  Tensor pattern(shape, 1.0);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t v = 0; v < V; ++v)
        if (joint_off[v] || frame_off[t]) pattern(c, t, v) = 0.0;
  return pattern;
}

Var apply_masking(const Var& x, const MaskingConfig& cfg) {
  if (!cfg.training || !x.tape().stochastic()) return x;
  if (cfg.p_joint == 0.0 && cfg.p_frame == 0.0) return x;
  return ops::mul(x, x.tape().constant(masking_pattern(x.shape(), cfg)));
}

Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

SgcLayer::SgcLayer(const std::string& name, std::size_t c_in, std::size_t c_out, Tensor adjacency,
                   std::mt19937_64& rng)
    : weight(name + ".weight", init_uniform({c_in, c_out}, c_in, rng)),
      mask(name + ".mask", Tensor(adjacency.shape(), 1.0)),
      adjacency_(std::move(adjacency)) {
  if (adjacency_.rank() != 2 || adjacency_.dim(0) != adjacency_.dim(1)) {
    throw ShapeError("sgc: adjacency must be square, got " + to_string(adjacency_.shape()));
  }
}

Var SgcLayer::forward(Tape& tape, const Var& x) const {
  if (x.shape().size() != 3 || x.shape()[2] != joints() || x.shape()[0] != weight.value.dim(0)) {
    throw ShapeError("sgc: input " + to_string(x.shape()) + " incompatible with weight " +
                     to_string(weight.value.shape()) + " and adjacency " +
                     to_string(adjacency_.shape()));
  }
  const std::size_t C = weight.value.dim(1), T = x.shape()[1], V = joints();
  Var effective = ops::mul(tape.constant(adjacency_), tape.param(mask));
  Var embedded = ops::pointwise_conv(x, tape.param(weight));
  Var rows = ops::reshape(embedded, {C * T, V});
  Var aggregated = ops::matmul(rows, effective, false, /*transpose_b=*/true);
  return ops::reshape(aggregated, {C, T, V});
}

SepTcnLayer::SepTcnLayer(const std::string& name, std::size_t c_in, std::size_t c_out,
                         std::size_t kernel, std::mt19937_64& rng)
    : depthwise(name + ".depthwise", init_uniform({c_in, kernel}, kernel, rng)),
      pointwise(name + ".pointwise", init_uniform({c_in, c_out}, c_in, rng)),
      bias(name + ".bias", Tensor({c_out})) {}

Var SepTcnLayer::forward(Tape& tape, const Var& x) const {
  Var dw = ops::depthwise_temporal_conv(x, tape.param(depthwise));
  return ops::pointwise_conv(dw, tape.param(pointwise), tape.param(bias));
}

DenseTcnLayer::DenseTcnLayer(const std::string& name, std::size_t c_in, std::size_t c_out,
                             std::size_t kernel, std::mt19937_64& rng)
    : kernel(name + ".kernel", init_uniform({c_out, c_in, kernel}, c_in * kernel, rng)),
      bias(name + ".bias", Tensor({c_out})) {}

Var DenseTcnLayer::forward(Tape& tape, const Var& x) const {
  return ops::add_channel_bias(ops::temporal_conv(x, tape.param(kernel)), tape.param(bias));
}

Conv1x1::Conv1x1(const std::string& name, std::size_t c_in, std::size_t c_out, std::mt19937_64& rng)
    : weight(name + ".weight", init_uniform({c_in, c_out}, c_in, rng)),
      bias(name + ".bias", Tensor({c_out})) {}

Var Conv1x1::forward(Tape& tape, const Var& x) const {
  return ops::pointwise_conv(x, tape.param(weight), tape.param(bias));
}

namespace {

std::variant<SepTcnLayer, DenseTcnLayer> make_temporal(const std::string& name, std::size_t c,
                                                       const BlockOptions& o, std::mt19937_64& rng) {
  if (o.temporal_conv == TemporalConvKind::dense) {
    return DenseTcnLayer(name + ".tcn", c, c, o.temporal_kernel, rng);
  }
  return SepTcnLayer(name + ".septcn", c, c, o.temporal_kernel, rng);
}

}  // namespace

GstcnBlock::GstcnBlock(const std::string& name, std::size_t c_in, std::size_t c_out,
                       const Tensor& adjacency, const BlockOptions& options, std::mt19937_64& rng)
    : sgc(name + ".sgc", c_in, c_out, adjacency, rng),
      temporal(make_temporal(name, c_out, options, rng)),
      c_in_(c_in),
      c_out_(c_out),
      options_(options) {
  if (options.temporal_kernel % 2 == 0) {
    throw std::invalid_argument("gstcn: temporal kernel must be odd");
  }
  if (c_in != c_out) projection.emplace(name + ".residual", c_in, c_out, rng);
}

Var GstcnBlock::forward(Tape& tape, const Var& x, const MaskingConfig& masking) const {
  Var spatial = sgc.forward(tape, apply_masking(x, masking));
  Var temporal_out = std::visit([&](const auto& layer) { return layer.forward(tape, spatial); }, temporal);
  Var residual = projection ? projection->forward(tape, x) : x;
  Var y = ops::add(temporal_out, residual);
  if (options_.temporal_pool_residual) y = ops::add(y, ops::max_pool_frames(residual));
  if (options_.spatial_pool_residual) y = ops::add(y, ops::max_pool_joints(residual));
  return ops::relu(y);
}

void GstcnBlock::collect(std::vector<Parameter*>& out) {
  sgc.collect(out);
  std::visit([&](auto& layer) { layer.collect(out); }, temporal);
  if (projection) projection->collect(out);
}

TemporalConvFlops septcn_flops(std::size_t c_in, std::size_t c_out, std::size_t frames,
                               std::size_t joints, std::size_t kernel) {
  TemporalConvFlops f;
  f.separable_per_position = static_cast<std::uint64_t>(kernel) * c_in + static_cast<std::uint64_t>(c_in) * c_out;
  f.dense_per_position = static_cast<std::uint64_t>(kernel) * c_in * c_out;
  const auto positions = static_cast<std::uint64_t>(frames) * joints;
  f.separable = f.separable_per_position * positions;
  f.dense = f.dense_per_position * positions;
  return f;
}

}  // namespace tsgcn
