#pragma once

#include <cstdint>

#include "erfseg/nn/param_store.hpp"

namespace erfseg {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;

  void validate() const;
};

/// First/second moments mirroring a ParamStore, plus the step counter.
template <typename T>
struct OptimizerState {
  ParamStore<T> m, v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const ParamStore<T>& params);
};

/// One AdamW step using each parameter's accumulated grad (missing grads
/// count as zero):
///   m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
///   p -= lr * (m / (1 - b1^t) / (sqrt(v / (1 - b2^t)) + eps) + wd * p)
/// Updates are evaluated in double and rounded once per element.
template <typename T>
void adamw_step(ParamStore<T>& params, OptimizerState<T>& state, const AdamWConfig& cfg);

}  // namespace erfseg
