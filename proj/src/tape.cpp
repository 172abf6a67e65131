#include "tsgcn/tape.hpp"

namespace tsgcn {

const Tensor& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Tensor value, bool requires_grad) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.op = "param";
  n.external = &p.value;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> parents, BackwardFn backward) {
  if (!value.all_finite()) {
    throw NumericError(std::string(op) + ": non-finite value in output of shape " +
                       to_string(value.shape()));
  }
  Node n;
  n.op = op;
  n.value = std::move(value);
  n.parents.reserve(parents.size());
  for (const auto& p : parents) {
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Tape::value(std::size_t id) const {
  const auto& n = nodes_[id];
  return n.external ? *n.external : n.value;
}

Tensor& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape());
  return n.grad;
}

void Tape::accumulate_grad(std::size_t id, const Tensor& g) {
  if (!nodes_[id].requires_grad) return;
  auto& buf = nodes_[id].grad;
  if (buf.empty()) {
    if (g.shape() != value(id).shape()) {
      throw ShapeError(std::string("backward of ") + nodes_[id].op + ": gradient shape " +
                       to_string(g.shape()) + " vs value " + to_string(value(id).shape()));
    }
    buf = g;
  } else {
    buf += g;
  }
}

void Tape::backward(const Var& loss) {
  if (loss.value().size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(loss.shape()));
  }
  if (backward_done_) throw std::logic_error("backward: tape already differentiated");
  backward_done_ = true;
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  nodes_[loss.id()].grad = Tensor(loss.shape(), 1.0);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty() || !n.backward) continue;
    visit_log_.push_back(i);
    // Parents always precede their children, so the callback never touches this buffer.
    Tensor g = std::move(n.grad);
    n.backward(*this, g);
    nodes_[i].grad = std::move(g);
  }
}

Tensor Tape::grad(const Var& v) const {
  const auto& n = nodes_[v.id()];
  return n.grad.empty() ? Tensor(value(v.id()).shape()) : n.grad;
}

Tensor Tape::param_grad(const Parameter& p) const {
  auto it = param_nodes_.find(&p);
  if (it == param_nodes_.end()) return Tensor(p.value.shape());
  return grad(Var(const_cast<Tape*>(this), it->second));
}

std::uint64_t Tape::next_seed() {
  // splitmix64
  std::uint64_t z = (seed_state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace tsgcn
