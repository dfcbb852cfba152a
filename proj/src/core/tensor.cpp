#include "erfseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "erfseg/error.hpp"

namespace erfseg {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t i) const {
  if (i >= shape_.size()) throw ShapeError("dim index out of range for shape " + shape_str(shape_));
  return shape_[i];
}

template <typename T>
Dims4 Tensor<T>::dims4() const {
  if (shape_.size() != 4) throw ShapeError("expected rank-4 tensor, got " + shape_str(shape_));
  return {shape_[0], shape_[1], shape_[2], shape_[3]};
}

template <typename T>
T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
const T& Tensor<T>::at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
  return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) throw ShapeError("item() on non-scalar tensor " + shape_str(shape_));
  return data_[0];
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  if (grad_.empty()) grad_.assign(data_.size(), T{0});
  return grad_;
}

template <typename T>
void Tensor<T>::accumulate_grad(std::span<const T> g) {
  if (g.size() != data_.size()) throw ShapeError("gradient size mismatch for shape " + shape_str(shape_));
  auto dst = mutable_grad();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

template <typename T>
void Tensor<T>::zero_grad() {
  if (!grad_.empty()) std::fill(grad_.begin(), grad_.end(), T{0});
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace erfseg
