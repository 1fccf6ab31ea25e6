#include "dualsrc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dualsrc::ad {

namespace {

double eval(const TapeFunction& f, std::span<const double> x) {
  Tape tape;
  const std::vector<Var> vars = tape.leaves(x);
  return f(tape, vars).value();
}

}  // namespace

GradCheckResult grad_check(const TapeFunction& f, std::span<const double> point,
                           double eps, double floor) {
  GradCheckResult r;
  {
    Tape tape;
    const std::vector<Var> vars = tape.leaves(point);
    const Var out = f(tape, vars);
    tape.backward(out);
    r.analytic.resize(point.size());
    for (std::size_t k = 0; k < point.size(); ++k) r.analytic[k] = tape.adjoint(vars[k]);
  }
  std::vector<double> x(point.begin(), point.end());
  r.numeric.resize(point.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + eps;
    const double fp = eval(f, x);
    x[k] = x0 - eps;
    const double fm = eval(f, x);
    x[k] = x0;
    r.numeric[k] = (fp - fm) / (2.0 * eps);
    const double a = r.analytic[k];
    const double n = r.numeric[k];
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (rel > r.max_rel_error) {
      r.max_rel_error = rel;
      r.worst_index = k;
    }
  }
  return r;
}

}  // namespace dualsrc::ad
