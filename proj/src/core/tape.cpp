#include "erfseg/tape.hpp"

#include "erfseg/error.hpp"

namespace erfseg {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Constant: return "constant";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::MaxPool2d: return "maxpool2d";
    case OpKind::Upsample: return "bilinear_upsample";
    case OpKind::InstanceNorm: return "instance_norm";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Relu: return "relu";
    case OpKind::Add: return "add";
    case OpKind::Mul: return "mul";
    case OpKind::Concat: return "concat";
    case OpKind::Sum: return "sum";
    case OpKind::Custom: return "custom";
  }
  return "?";
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T>& t) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{OpKind::Leaf, {}, id, {}});
  values_.push_back(&t);
  leaf_targets_.push_back(t.requires_grad() ? &t : nullptr);
  needs_grad_.push_back(t.requires_grad());
  grads_.emplace_back();
  return Var<T>(this, id);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  const std::size_t id = nodes_.size();
  owned_.push_back(std::move(value));
  nodes_.push_back(Node{OpKind::Constant, {}, id, {}});
  values_.push_back(&owned_.back());
  leaf_targets_.push_back(nullptr);
  needs_grad_.push_back(false);
  grads_.emplace_back();
  return Var<T>(this, id);
}

template <typename T>
Var<T> Tape<T>::record(OpKind kind, std::vector<std::size_t> inputs, Tensor<T> output, BackwardFn backward) {
  const std::size_t id = nodes_.size();
  bool needs = false;
  for (auto in : inputs) {
    if (in >= id) throw std::logic_error("tape input recorded after its consumer");
    needs = needs || needs_grad_[in];
  }
  owned_.push_back(std::move(output));
  nodes_.push_back(Node{kind, std::move(inputs), id, std::move(backward)});
  values_.push_back(&owned_.back());
  leaf_targets_.push_back(nullptr);
  needs_grad_.push_back(needs);
  grads_.emplace_back();
  return Var<T>(this, id);
}

template <typename T>
Tensor<T>& Tape<T>::grad(std::size_t id) {
  auto& g = grads_[id];
  if (g.numel() == 0 && values_[id]->numel() != 0) g = Tensor<T>(values_[id]->shape());
  return g;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.value().numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
  }
  grad(loss.id()).fill(T{1});
  run_backward(loss.id());
}

template <typename T>
void Tape<T>::backward(Var<T> out, const Tensor<T>& seed) {
  if (seed.shape() != out.shape()) {
    throw ShapeError("seed gradient shape " + shape_str(seed.shape()) + " != output shape " +
                     shape_str(out.shape()));
  }
  auto& g = grad(out.id());
  for (std::size_t i = 0; i < seed.numel(); ++i) g[i] += seed[i];
  run_backward(out.id());
}

template <typename T>
void Tape<T>::run_backward(std::size_t from) {
  for (std::size_t i = from + 1; i-- > 0;) {
    const Node& n = nodes_[i];
    if (!needs_grad_[i] || !has_grad(i)) continue;
    if (n.kind == OpKind::Leaf) {
      if (leaf_targets_[i]) leaf_targets_[i]->accumulate_grad(grads_[i].data());
      grads_[i] = Tensor<T>();
      continue;
    }
    if (n.backward) n.backward(*this, n);
    // Intermediate gradients are consumed exactly once.
    grads_[i] = Tensor<T>();
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace erfseg
