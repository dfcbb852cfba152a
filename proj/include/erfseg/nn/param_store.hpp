#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "erfseg/tensor.hpp"

namespace erfseg {

/// Named learnable tensors. Names follow `stage{i}.{branch}.{layer}.{kind}`;
/// iteration is in lexicographic name order, so it is deterministic and
/// independent of declaration order. Tensor addresses are stable for the
/// lifetime of the store (tapes hold pointers to them).
template <typename T>
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  ParamStore() = default;
  // Tapes reference parameter tensors by address; moving a store keeps map
  // nodes in place, copying creates independent tensors.
  ParamStore(const ParamStore&) = default;
  ParamStore& operator=(const ParamStore&) = default;
  ParamStore(ParamStore&&) noexcept = default;
  ParamStore& operator=(ParamStore&&) noexcept = default;

  /// Inserts a zero tensor; throws ConfigError on a duplicate name.
  Tensor<T>& add(const std::string& name, Shape shape);
  Tensor<T>& insert(const std::string& name, Tensor<T> value);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  /// Throws ConfigError if absent.
  Tensor<T>& get(const std::string& name);
  const Tensor<T>& get(const std::string& name) const;

  std::size_t size() const { return params_.size(); }
  std::vector<std::string> names() const;

  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }
  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }

  void set_requires_grad(bool on);
  void zero_grad();
  void clear_grad();
  bool all_finite() const;

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, t] : params_) out.insert(name, t.template cast<U>()).set_requires_grad(t.requires_grad());
    return out;
  }

 private:
  Map params_;
};

/// Sum of element counts over all tensors in the store.
template <typename T>
std::size_t count_params(const ParamStore<T>& params);

enum class ParamKind { Weight, Bias, Gamma, Beta };

/// Declaration of one learnable tensor, produced by layer builders and
/// consumed by init_params.
struct ParamDecl {
  std::string name;
  Shape shape;
  ParamKind kind;
  std::size_t fan_in = 1;  // Weight only
};

/// Weights ~ N(0, sqrt(2 / fan_in)), biases 0, gamma 1, beta 0. Each tensor
/// draws from its own generator keyed by (seed, name), so the values of one
/// parameter do not depend on which other parameters exist.
template <typename T>
ParamStore<T> init_params(const std::vector<ParamDecl>& decls, std::uint64_t seed);

/// Number of scalars the declarations describe (no allocation).
std::size_t count_params(const std::vector<ParamDecl>& decls);

}  // namespace erfseg
