#pragma once

#include "erfseg/tape.hpp"

namespace erfseg {

/// Squared-denominator Dice loss, per sample
///   1 - (2 sum(p g) + eps) / (sum(p^2) + sum(g^2) + eps),
/// averaged over the batch. `prob` is [B, 1, H, W] in [0, 1]; `target` has the
/// same shape with values in {0, 1}. Throws ShapeError / std::domain_error.
template <typename T>
Var<T> dice_loss(Var<T> prob, const Tensor<T>& target, T eps = T(1e-5));

}  // namespace erfseg
