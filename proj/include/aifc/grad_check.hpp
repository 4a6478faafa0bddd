#pragma once

#include <functional>
#include <span>
#include <vector>

#include "aifc/autograd.hpp"

namespace aifc {

struct GradCheckResult {
  // False when the function contains a non-differentiable op (rounding);
  // the error is then not meaningful.
  bool applicable = true;
  bool finite = true;
  double max_rel_error = 0.0;

  bool passed(double tol) const { return applicable && finite && max_rel_error < tol; }
};

// Builds a scalar from leaf vars on the given tape.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Compares the tape gradient with central differences, element by element:
// max |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h = 1e-5);

}  // namespace aifc
