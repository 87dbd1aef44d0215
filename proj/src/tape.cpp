// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/tape.hpp"

namespace cpcnn {

template <typename T>
Var<T> Tape<T>::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var<T>{this, static_cast<NodeId>(nodes_.size() - 1)};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.kind = "constant";
  n.owned = std::move(value);
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T> value) {
  Node n;
  n.kind = "leaf";
  n.owned = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::parameter(const Tensor<T>& value, bool trainable) {
  Node n;
  n.kind = "parameter";
  n.borrowed = &value;
  n.requires_grad = trainable;
  return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(const char* kind, Tensor<T> value, std::vector<NodeId> inputs,
                       BackwardFn fn) {
  Node n;
  n.kind = kind;
  n.owned = std::move(value);
  for (NodeId id : inputs) {
    if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
      fail(ErrorCode::kContractViolation, std::string(kind) + ": input node is not on this tape");
    }
    n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.fn = std::move(fn);
  return push(std::move(n));
}

template <typename T>
const Tensor<T>& Tape<T>::value(NodeId id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  return n.borrowed ? *n.borrowed : n.owned;
}

template <typename T>
Tensor<T>& Tape<T>::grad_buffer(NodeId id) {
  Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (!n.grad) n.grad.emplace(value(id).shape());
  return *n.grad;
}

template <typename T>
Tensor<T> Tape<T>::grad(NodeId id) const {
  const Node& n = nodes_.at(static_cast<std::size_t>(id));
  if (n.grad) return *n.grad;
  return Tensor<T>(value(id).shape());
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  if (loss.tape != this) fail(ErrorCode::kContractViolation, "backward: loss is not on this tape");
  const Tensor<T>& lv = value(loss.id);
  if (lv.shape() != Shape{1}) {
    fail(ErrorCode::kShapeMismatch, "backward: loss must be a scalar of shape [1], got " +
                                        shape_str(lv.shape()));
  }
  for (std::size_t i = 0; i <= static_cast<std::size_t>(loss.id); ++i) nodes_[i].grad.reset();
  grad_buffer(loss.id)[0] = T(1);
  visited_ = 0;
  for (NodeId id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.grad || !n.fn) continue;
    n.fn(*this, id);
    ++visited_;
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace cpcnn
