#include "tsgcn/gradcheck.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace tsgcn {
namespace {

double evaluate(const ScalarFn& f) {
  Tape tape(0, /*stochastic=*/false);
  Var out = f(tape);
  if (out.value().size() != 1) {
    throw ShapeError("grad_check: function must return a scalar, got " + to_string(out.shape()));
  }
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, std::span<Parameter* const> params, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) {
    throw std::invalid_argument("grad_check: eps must lie in [1e-7, 1e-3]");
  }
  std::vector<Tensor> analytic;
  {
    Tape tape(0, /*stochastic=*/false);
    Var out = f(tape);
    if (out.value().size() != 1) {
      throw ShapeError("grad_check: function must return a scalar, got " + to_string(out.shape()));
    }
    tape.backward(out);
    for (auto* p : params) analytic.push_back(tape.param_grad(*p));
  }

  GradCheckResult result;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& value = params[k]->value;
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value[i];
      value[i] = orig + eps;
      const double up = evaluate(f);
      value[i] = orig - eps;
      const double down = evaluate(f);
      value[i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = std::abs(analytic[k][i] - numeric) / std::max(1.0, std::abs(numeric));
      ++result.coordinates;
      if (result.worst_param.empty() || err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = params[k]->name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace tsgcn
