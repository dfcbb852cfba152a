#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace erfseg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Extents of a rank-4 activation tensor.
struct Dims4 {
  std::size_t n, c, h, w;
  std::size_t plane() const { return h * w; }
};

/// Dense row-major tensor. `grad` is an optional accumulator of the same
/// shape; it is only allocated once something writes into it.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor(Shape{}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const;
  std::size_t numel() const { return data_.size(); }
  Dims4 dims4() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w);
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const;
  T item() const;

  void fill(T v);
  /// Returns a tensor with the same data and a different shape of equal numel.
  Tensor reshaped(Shape shape) const;

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool on) {
    requires_grad_ = on;
    return *this;
  }
  bool has_grad() const { return !grad_.empty(); }
  std::span<const T> grad() const { return grad_; }
  /// Grad buffer, zero-allocated on first access.
  std::span<T> mutable_grad();
  void accumulate_grad(std::span<const T> g);
  void zero_grad();
  void clear_grad() { grad_.clear(); }

  bool all_finite() const;

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
  bool requires_grad_ = false;
  std::vector<T> grad_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace erfseg
