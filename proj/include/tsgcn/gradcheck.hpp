#pragma once

#include <functional>
#include <span>
#include <string>

#include "tsgcn/tape.hpp"

namespace tsgcn {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t coordinates = 0;
};

/// Builds a scalar on the given tape from the current parameter values.
using ScalarFn = std::function<Var(Tape&)>;

/// Compares tape gradients of `f` against central differences
/// (f(p+eps) - f(p-eps)) / (2 eps) for every coordinate of every parameter.
/// The error per coordinate is |analytic - numeric| / max(1, |numeric|).
/// Tapes are built with stochastic ops disabled. eps must lie in [1e-7, 1e-3].
GradCheckResult grad_check(const ScalarFn& f, std::span<Parameter* const> params,
                           double eps = 1e-6);

}  // namespace tsgcn
