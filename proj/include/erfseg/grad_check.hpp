#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "erfseg/tape.hpp"

namespace erfseg {

struct GradCheckReport {
  double max_rel_err = 0.0;
  double max_abs_err = 0.0;
  std::size_t coords_checked = 0;
  std::size_t failures = 0;
  /// Human-readable description of the worst coordinate.
  std::string worst;
  bool pass = false;
};

/// Scalar-valued function of tape leaves. Receives one leaf per input tensor,
/// in the order the inputs were passed to grad_check.
using GradFn = std::function<Var<double>(Tape<double>&, std::span<const Var<double>>)>;

/// Compares reverse-mode gradients against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps), coordinate by coordinate, for every input.
/// Relative error is |a - n| / max(|a|, |n|, abs_floor); the check passes iff
/// the maximum stays below `tol`. `max_coords_per_input` (0 = all) checks an
/// evenly strided subset on large tensors.
GradCheckReport grad_check(const GradFn& f, std::vector<Tensor<double>*> inputs, double eps = 1e-5,
                           double tol = 1e-4, double abs_floor = 1e-3, std::size_t max_coords_per_input = 0);

}  // namespace erfseg
