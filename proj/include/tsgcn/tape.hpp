#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "tsgcn/tensor.hpp"

namespace tsgcn {

/// A named trainable tensor. Gradients live on the tape that used it.
struct Parameter {
  Parameter() = default;
  Parameter(std::string name, Tensor value) : name(std::move(name)), value(std::move(value)) {}

  std::string name;
  Tensor value;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode gradient record for one forward pass.
///
/// Nodes are appended in execution order and visited in exact reverse order by
/// backward(). A tape belongs to a single thread; use one tape per sample or step.
class Tape {
 public:
  /// Propagates the output gradient of a node into its parents via accumulate_grad().
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  explicit Tape(std::uint64_t seed = 0, bool stochastic = true)
      : seed_state_(seed), stochastic_(stochastic) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input data. Gradients are tracked only when `requires_grad` is set.
  Var constant(Tensor value, bool requires_grad = false);

  /// Leaf for a parameter; recording the same parameter twice returns the same node.
  /// The parameter must outlive the tape.
  Var param(const Parameter& p);

  /// Records the result of an operation. `backward` may be empty for ops that
  /// have no differentiable parents.
  Var record(const char* op, Tensor value, std::vector<Var> parents, BackwardFn backward);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(const Var& v) const { return requires_grad(v.id()); }

  /// Adds `g` to the gradient buffer of node `id` (no-op for non-tracked nodes).
  void accumulate_grad(std::size_t id, const Tensor& g);
  /// Mutable gradient buffer, zero-initialized on first use.
  Tensor& grad_buffer(std::size_t id);

  /// Runs the reverse sweep from a scalar loss.
  void backward(const Var& loss);

  /// Gradient of the last backward() w.r.t. a node; zeros if it was never reached.
  Tensor grad(const Var& v) const;
  /// Gradient w.r.t. a parameter; exactly zero if the parameter was not used.
  Tensor param_grad(const Parameter& p) const;

  /// Stochastic ops (dropout, masking) are identities when this is false.
  bool stochastic() const { return stochastic_; }
  /// Deterministic per-op seed stream derived from the construction seed.
  std::uint64_t next_seed();

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::size_t>& backward_order() const { return visit_log_; }

 private:
  struct Node {
    const char* op = "";
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  std::vector<std::size_t> visit_log_;
  std::uint64_t seed_state_;
  bool stochastic_;
  bool backward_done_ = false;
};

}  // namespace tsgcn
