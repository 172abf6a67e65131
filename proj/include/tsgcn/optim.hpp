#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "tsgcn/tape.hpp"

namespace tsgcn {

/// SGD with classic (heavy-ball) momentum:
///   v <- momentum * v + g
///   p <- p - lr * v
class SgdMomentum {
 public:
  SgdMomentum(std::span<Parameter* const> params, double learning_rate, double momentum);

  /// `grads[i]` must match the shape of the i-th parameter.
  void step(std::span<const Tensor> grads);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  double momentum() const { return momentum_; }
  const std::vector<Tensor>& velocity() const { return velocity_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> velocity_;
  double lr_;
  double momentum_;
};

struct NamedTensor {
  std::string name;
  Tensor value;
};

// Checkpoint layout (little-endian):
//   "TSGCPARM" | u32 version=1 | u64 count |
//   count x { u32 name_len | name | u32 rank | u64 dims[rank] | f64 values[] }
void write_parameters(std::ostream& os, std::span<const Parameter* const> params);
std::vector<NamedTensor> read_parameters(std::istream& is);

}  // namespace tsgcn
