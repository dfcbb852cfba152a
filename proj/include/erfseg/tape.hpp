#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string_view>
#include <vector>

#include "erfseg/tensor.hpp"

namespace erfseg {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

enum class OpKind {
  Leaf,
  Constant,
  Conv2d,
  MaxPool2d,
  Upsample,
  InstanceNorm,
  Sigmoid,
  Relu,
  Add,
  Mul,
  Concat,
  Sum,
  Custom,
};

std::string_view op_name(OpKind kind);

/// Linear record of differentiable operations. Node i has output id i and
/// only references inputs with smaller ids, so the recording order is a
/// topological order and backward simply walks it in reverse.
template <typename T>
class Tape {
 public:
  struct Node;
  using BackwardFn = std::function<void(Tape&, const Node&)>;

  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    std::size_t output;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers an externally owned tensor. When `t.requires_grad()` is set,
  /// backward() accumulates dLoss/dt into `t`'s grad buffer. The tensor must
  /// outlive the tape.
  Var<T> leaf(Tensor<T>& t);
  /// Copies `value` onto the tape as a non-differentiable input.
  Var<T> constant(Tensor<T> value);
  /// Appends an op node. Its output requires grad iff any input does.
  Var<T> record(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> output, BackwardFn backward);

  const Tensor<T>& value(std::size_t id) const { return *values_[id]; }
  bool requires_grad(std::size_t id) const { return needs_grad_[id]; }
  /// Gradient buffer for `id`, zero-allocated on first use.
  Tensor<T>& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return grads_[id].numel() != 0; }

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t id) const { return nodes_[id]; }

  /// Reverse pass from a scalar loss (seed gradient 1).
  void backward(Var<T> loss);
  /// Reverse pass with an explicit output gradient of the same shape as `out`.
  void backward(Var<T> out, const Tensor<T>& seed);

 private:
  void run_backward(std::size_t from);

  std::vector<Node> nodes_;
  std::vector<const Tensor<T>*> values_;
  std::vector<Tensor<T>*> leaf_targets_;
  std::vector<bool> needs_grad_;
  std::vector<Tensor<T>> grads_;
  std::deque<Tensor<T>> owned_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace erfseg
