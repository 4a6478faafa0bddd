#include "aifc/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "aifc/error.hpp"

namespace aifc {
namespace {

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
  Tape tape(false);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.constant(t));
  Var out = f(tape, vars);
  if (out.value().size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  return out.value()[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Tensor>& inputs, double h) {
  GradCheckResult result;
  Tape tape(true);
  std::vector<Var> vars;
  vars.reserve(inputs.size());
  for (const Tensor& t : inputs) vars.push_back(tape.leaf(t));
  Var out = f(tape, vars);
  if (out.value().size() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  if (!std::isfinite(out.value()[0])) {
    result.finite = false;
    return result;
  }
  tape.backward(out);
  if (tape.saw_nondifferentiable()) {
    result.applicable = false;
    return result;
  }

  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& analytic = vars[k].grad();
    for (std::size_t i = 0; i < inputs[k].size(); ++i) {
      const double x0 = inputs[k][i];
      probe[k][i] = x0 + h;
      const double fp = evaluate(f, probe);
      probe[k][i] = x0 - h;
      const double fm = evaluate(f, probe);
      probe[k][i] = x0;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      if (!std::isfinite(numeric) || !std::isfinite(a)) {
        result.finite = false;
        return result;
      }
      result.max_rel_error = std::max(result.max_rel_error, std::abs(a - numeric) / std::max(1.0, std::abs(a)));
    }
  }
  return result;
}

}  // namespace aifc
