#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dualsrc/tape.hpp"

namespace dualsrc::ad {

// Builds a scalar on `tape` from leaves bound to the given point.
using TapeFunction = std::function<Var(Tape&, std::span<const Var>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<double> analytic;
  std::vector<double> numeric;
};

// Backward-pass gradient vs central differences (f(x+eps e_k) - f(x-eps e_k))
// / 2 eps. Relative error per component is |a - n| / max(|a|, |n|, floor).
GradCheckResult grad_check(const TapeFunction& f, std::span<const double> point,
                           double eps = 1e-5, double floor = 1e-6);

}  // namespace dualsrc::ad
