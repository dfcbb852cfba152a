#include "erfseg/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "erfseg/error.hpp"

namespace erfseg {

namespace {
double evaluate(const GradFn& f, const std::vector<Tensor<double>*>& inputs) {
  Tape<double> tape;
  std::vector<Var<double>> leaves;
  leaves.reserve(inputs.size());
  for (auto* t : inputs) leaves.push_back(tape.leaf(*t));
  const Var<double> out = f(tape, leaves);
  if (out.value().numel() != 1) throw ShapeError("grad_check: function must be scalar-valued");
  return out.value()[0];
}
}  // namespace

GradCheckReport grad_check(const GradFn& f, std::vector<Tensor<double>*> inputs, double eps, double tol,
                           double abs_floor, std::size_t max_coords_per_input) {
  std::vector<bool> saved_flags;
  for (auto* t : inputs) {
    saved_flags.push_back(t->requires_grad());
    t->set_requires_grad(true);
    t->clear_grad();
  }
  {
    Tape<double> tape;
    std::vector<Var<double>> leaves;
    for (auto* t : inputs) leaves.push_back(tape.leaf(*t));
    tape.backward(f(tape, leaves));
  }
  std::vector<std::vector<double>> analytic;
  for (auto* t : inputs) {
    analytic.emplace_back(t->numel(), 0.0);
    if (t->has_grad()) std::copy(t->grad().begin(), t->grad().end(), analytic.back().begin());
    t->clear_grad();
    t->set_requires_grad(false);
  }

  GradCheckReport report;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor<double>& t = *inputs[k];
    const std::size_t n = t.numel();
    const std::size_t step =
        (max_coords_per_input == 0 || n <= max_coords_per_input) ? 1 : (n + max_coords_per_input - 1) / max_coords_per_input;
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = t[i];
      t[i] = orig + eps;
      const double fp = evaluate(f, inputs);
      t[i] = orig - eps;
      const double fm = evaluate(f, inputs);
      t[i] = orig;
      const double numeric = (fp - fm) / (2.0 * eps);
      const double a = analytic[k][i];
      const double abs_err = std::abs(a - numeric);
      const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), abs_floor});
      ++report.coords_checked;
      if (rel >= tol) ++report.failures;
      report.max_abs_err = std::max(report.max_abs_err, abs_err);
      if (report.worst.empty() || rel > report.max_rel_err) {
        report.max_rel_err = rel;
        std::ostringstream os;
        os << "input " << k << " coord " << i << ": analytic " << a << " numeric " << numeric;
        report.worst = os.str();
      }
    }
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) inputs[k]->set_requires_grad(saved_flags[k]);
  report.pass = report.max_rel_err < tol;
  return report;
}

}  // namespace erfseg
