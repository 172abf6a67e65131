#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "tsgcn/ops.hpp"

namespace tsgcn {

/// Random whole-joint and whole-frame zeroing applied to block inputs.
struct MaskingConfig {
  double p_joint = 0.1;
  double p_frame = 0.1;
  bool training = false;
  std::uint64_t seed = 0;
};

/// 0/1 pattern of shape [C x T x V]: joint v is dropped with probability
/// p_joint, frame t with probability p_frame, independently, from `seed`.
Tensor masking_pattern(const Shape& shape, const MaskingConfig& cfg);

/// Identity unless cfg.training and the tape allows stochastic ops.
Var apply_masking(const Var& x, const MaskingConfig& cfg);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
Tensor init_uniform(Shape shape, std::size_t fan_in, std::mt19937_64& rng);

/// Spatial graph convolution with a learnable multiplicative adjacency mask:
///   out[:, t, :] = W^T x[:, t, :] (A_hat (.) M)^T
/// Single weight matrix shared over each neighbor set (uni-labeling).
class SgcLayer {
 public:
  SgcLayer(const std::string& name, std::size_t c_in, std::size_t c_out, Tensor adjacency,
           std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x) const;

  Parameter weight;  // [C_in x C_out]
  Parameter mask;    // [V x V], ones at init
  const Tensor& adjacency() const { return adjacency_; }
  std::size_t joints() const { return adjacency_.dim(0); }

  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&weight, &mask}); }

 private:
  Tensor adjacency_;
};

/// Depthwise k x 1 temporal filter per channel, then 1x1 channel mixing + bias.
class SepTcnLayer {
 public:
  SepTcnLayer(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t kernel,
              std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x) const;

  Parameter depthwise;  // [C_in x K]
  Parameter pointwise;  // [C_in x C_out]
  Parameter bias;       // [C_out]

  void collect(std::vector<Parameter*>& out) {
    out.insert(out.end(), {&depthwise, &pointwise, &bias});
  }
};

/// Full k x 1 temporal convolution; the non-separable baseline.
class DenseTcnLayer {
 public:
  DenseTcnLayer(const std::string& name, std::size_t c_in, std::size_t c_out, std::size_t kernel,
                std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x) const;

  Parameter kernel;  // [C_out x C_in x K]
  Parameter bias;    // [C_out]

  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&kernel, &bias}); }
};

/// 1x1 convolution with bias.
class Conv1x1 {
 public:
  Conv1x1(const std::string& name, std::size_t c_in, std::size_t c_out, std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x) const;

  Parameter weight;  // [C_in x C_out]
  Parameter bias;    // [C_out]

  void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&weight, &bias}); }
};

enum class TemporalConvKind { separable, dense };

struct BlockOptions {
  TemporalConvKind temporal_conv = TemporalConvKind::separable;
  std::size_t temporal_kernel = 3;
  bool temporal_pool_residual = true;
  bool spatial_pool_residual = false;
};

/// SGC followed by a temporal convolution, with residual summands:
///   y = relu(TCN(SGC(mask(x))) + r + maxpool_T(r) [+ maxpool_V(r)]),  r = proj(x)
/// where proj is a 1x1 convolution when C_in != C_out and the identity otherwise.
class GstcnBlock {
 public:
  GstcnBlock(const std::string& name, std::size_t c_in, std::size_t c_out, const Tensor& adjacency,
             const BlockOptions& options, std::mt19937_64& rng);

  Var forward(Tape& tape, const Var& x, const MaskingConfig& masking) const;

  std::size_t in_channels() const { return c_in_; }
  std::size_t out_channels() const { return c_out_; }
  const BlockOptions& options() const { return options_; }

  SgcLayer sgc;
  std::variant<SepTcnLayer, DenseTcnLayer> temporal;
  std::optional<Conv1x1> projection;

  void collect(std::vector<Parameter*>& out);

 private:
  std::size_t c_in_;
  std::size_t c_out_;
  BlockOptions options_;
};

/// Multiply counts of a k x 1 temporal convolution from C_in to C_out channels.
struct TemporalConvFlops {
  std::uint64_t separable_per_position = 0;  // k*C_in + C_in*C_out
  std::uint64_t dense_per_position = 0;      // k*C_in*C_out
  std::uint64_t separable = 0;               // per position * T * V
  std::uint64_t dense = 0;

  double reduction() const { return static_cast<double>(dense) / static_cast<double>(separable); }
};

TemporalConvFlops septcn_flops(std::size_t c_in, std::size_t c_out, std::size_t frames,
                               std::size_t joints, std::size_t kernel);

}  // namespace tsgcn
