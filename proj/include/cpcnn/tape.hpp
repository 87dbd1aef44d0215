// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "cpcnn/tensor.hpp"

namespace cpcnn {

using NodeId = std::int32_t;

template <typename T>
class Tape;

/// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  NodeId id = -1;

  const Tensor<T>& value() const { return tape->value(id); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape->requires_grad(id); }
};

/// Append-only reverse-mode tape. Nodes are stored in creation order, so inputs
/// always precede their consumers; backward() walks the list once, in reverse.
/// A tape is single-threaded. Independent tapes may live on separate threads.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, NodeId self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Untracked input (never receives a gradient).
  Var<T> constant(Tensor<T> value);
  /// Tracked input owned by the tape.
  Var<T> leaf(Tensor<T> value);
  /// Borrowed parameter; `value` must outlive the tape.
  Var<T> parameter(const Tensor<T>& value, bool trainable);

  /// Record an op output. `fn` is kept only when some input requires a gradient.
  Var<T> record(const char* kind, Tensor<T> value, std::vector<NodeId> inputs, BackwardFn fn);

  const Tensor<T>& value(NodeId id) const;
  bool requires_grad(NodeId id) const { return nodes_.at(id).requires_grad; }
  const char* kind(NodeId id) const { return nodes_.at(id).kind; }
  const std::vector<NodeId>& inputs(NodeId id) const { return nodes_.at(id).inputs; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient accumulator of a node, allocated as zeros on first use.
  Tensor<T>& grad_buffer(NodeId id);
  bool has_grad(NodeId id) const { return nodes_.at(id).grad.has_value(); }
  /// Accumulated gradient, or zeros when nothing flowed into the node.
  Tensor<T> grad(NodeId id) const;

  /// Seeds d(loss)/d(loss) = 1 and propagates. Loss must be shape [1].
  void backward(Var<T> loss);

  /// Number of backward closures executed by the last backward().
  std::size_t visited() const { return visited_; }

 private:
  struct Node {
    const char* kind = "";
    Tensor<T> owned;
    const Tensor<T>* borrowed = nullptr;
    std::vector<NodeId> inputs;
    bool requires_grad = false;
    BackwardFn fn;
    std::optional<Tensor<T>> grad;
  };

  Var<T> push(Node node);

  std::vector<Node> nodes_;
  std::size_t visited_ = 0;
};

}  // namespace cpcnn
