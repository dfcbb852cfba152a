#include "erfseg/nn/param_store.hpp"

#include <cmath>
#include <random>

#include "erfseg/error.hpp"
#include "erfseg/hash.hpp"

namespace erfseg {

template <typename T>
Tensor<T>& ParamStore<T>::add(const std::string& name, Shape shape) {
  return insert(name, Tensor<T>(std::move(shape)));
}

template <typename T>
Tensor<T>& ParamStore<T>::insert(const std::string& name, Tensor<T> value) {
  auto [it, inserted] = params_.emplace(name, std::move(value));
  if (!inserted) throw ConfigError("duplicate parameter name '" + name + "'");
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
const Tensor<T>& ParamStore<T>::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return it->second;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& kv : params_) out.push_back(kv.first);
  return out;
}

template <typename T>
void ParamStore<T>::set_requires_grad(bool on) {
  for (auto& kv : params_) kv.second.set_requires_grad(on);
}

template <typename T>
void ParamStore<T>::zero_grad() {
  for (auto& kv : params_) kv.second.zero_grad();
}

template <typename T>
void ParamStore<T>::clear_grad() {
  for (auto& kv : params_) kv.second.clear_grad();
}

template <typename T>
bool ParamStore<T>::all_finite() const {
  for (const auto& kv : params_) {
    if (!kv.second.all_finite()) return false;
  }
  return true;
}

template <typename T>
std::size_t count_params(const ParamStore<T>& params) {
  std::size_t n = 0;
  for (const auto& kv : params) n += kv.second.numel();
  return n;
}

std::size_t count_params(const std::vector<ParamDecl>& decls) {
  std::size_t n = 0;
  for (const auto& d : decls) n += shape_numel(d.shape);
  return n;
}

template <typename T>
ParamStore<T> init_params(const std::vector<ParamDecl>& decls, std::uint64_t seed) {
  ParamStore<T> store;
  for (const auto& d : decls) {
    Tensor<T>& t = store.add(d.name, d.shape);
    t.set_requires_grad(true);
    switch (d.kind) {
      case ParamKind::Weight: {
        if (d.fan_in == 0) throw ConfigError("parameter '" + d.name + "' has zero fan-in");
        std::mt19937_64 rng(derive_seed(seed, fnv1a(d.name)));
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(d.fan_in)));
        for (auto& v : t.data()) v = static_cast<T>(dist(rng));
        break;
      }
      case ParamKind::Gamma:
        t.fill(T{1});
        break;
      case ParamKind::Bias:
      case ParamKind::Beta:
        break;
    }
  }
  return store;
}

template class ParamStore<float>;
template class ParamStore<double>;
template std::size_t count_params(const ParamStore<float>&);
template std::size_t count_params(const ParamStore<double>&);
template ParamStore<float> init_params<float>(const std::vector<ParamDecl>&, std::uint64_t);
template ParamStore<double> init_params<double>(const std::vector<ParamDecl>&, std::uint64_t);

}  // namespace erfseg
