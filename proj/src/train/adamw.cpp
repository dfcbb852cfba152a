#include "erfseg/train/adamw.hpp"

#include <cmath>

#include "erfseg/error.hpp"

namespace erfseg {

void AdamWConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be finite and >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("AdamW betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("AdamW eps must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be >= 0");
}

template <typename T>
OptimizerState<T> OptimizerState<T>::zeros_like(const ParamStore<T>& params) {
  OptimizerState s;
  for (const auto& [name, t] : params) {
    s.m.add(name, t.shape());
    s.v.add(name, t.shape());
  }
  return s;
}

template <typename T>
void adamw_step(ParamStore<T>& params, OptimizerState<T>& state, const AdamWConfig& cfg) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params) {
    auto m = state.m.get(name).data();
    auto v = state.v.get(name).data();
    if (m.size() != p.numel() || v.size() != p.numel()) {
      throw ShapeError("optimizer state for '" + name + "' does not match the parameter shape");
    }
    const auto g = p.grad();
    const bool has_grad = !g.empty();
    auto pv = p.data();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      const double gi = has_grad ? static_cast<double>(g[i]) : 0.0;
      const double mi = cfg.beta1 * static_cast<double>(m[i]) + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * static_cast<double>(v[i]) + (1.0 - cfg.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double mhat = mi / bc1, vhat = vi / bc2;
      const double pi = static_cast<double>(pv[i]);
      pv[i] = static_cast<T>(pi - cfg.lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * pi));
    }
  }
}

template struct OptimizerState<float>;
template struct OptimizerState<double>;
template void adamw_step<float>(ParamStore<float>&, OptimizerState<float>&, const AdamWConfig&);
template void adamw_step<double>(ParamStore<double>&, OptimizerState<double>&, const AdamWConfig&);

}  // namespace erfseg
