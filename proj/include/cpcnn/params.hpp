// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "cpcnn/optimizer.hpp"
#include "cpcnn/tape.hpp"

namespace cpcnn {

/// Ordered, named parameter tensors of one network. `layer` is the index of the
/// owning layer in forward order, which is what frozen prefixes count.
template <typename T>
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    int layer = 0;
    bool trainable = true;
  };

  Tensor<T>& add(std::string name, Tensor<T> init, int layer) {
    for (const Entry& e : entries_) {
      if (e.name == name) fail(ErrorCode::kInvalidArgument, "duplicate parameter name " + name);
    }
    entries_.push_back(Entry{std::move(name), std::move(init), layer, true});
    return entries_.back().value;
  }

  std::size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name == name) return i;
    }
    fail(ErrorCode::kInvalidArgument, "unknown parameter " + std::string(name));
  }
  Tensor<T>& get(std::string_view name) { return entries_[index_of(name)].value; }
  const Tensor<T>& get(std::string_view name) const { return entries_[index_of(name)].value; }

  /// Marks layers [0, prefix) frozen and the rest trainable.
  void freeze_prefix(int prefix) {
    for (Entry& e : entries_) e.trainable = e.layer >= prefix;
  }
  void set_all_trainable(bool trainable) {
    for (Entry& e : entries_) e.trainable = trainable;
  }
  bool any_trainable() const {
    for (const Entry& e : entries_) {
      if (e.trainable) return true;
    }
    return false;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Entry& e : entries_) n += e.value.size();
    return n;
  }

  template <typename U>
  ParameterStore<U> cast() const {
    ParameterStore<U> out;
    for (const Entry& e : entries_) {
      out.add(e.name, e.value.template cast<U>(), e.layer);
      out.entries().back().trainable = e.trainable;
    }
    return out;
  }

 private:
  std::vector<Entry> entries_;
};

/// Parameters registered on one tape, in store order.
template <typename T>
struct BoundParams {
  const ParameterStore<T>* store = nullptr;
  std::vector<Var<T>> vars;

  Var<T> operator()(std::string_view name) const { return vars[store->index_of(name)]; }
};

/// `detached` binds every parameter as untrainable (used when a network only
/// relays gradients to its input, e.g. the discriminator during a generator step).
template <typename T>
BoundParams<T> bind(Tape<T>& tape, const ParameterStore<T>& store, bool detached = false) {
  BoundParams<T> b;
  b.store = &store;
  for (const auto& e : store.entries()) b.vars.push_back(tape.parameter(e.value, e.trainable && !detached));
  return b;
}

/// Applies one optimizer step to the trainable entries only. Frozen entries are not touched.
template <typename T>
void apply_sgd(ParameterStore<T>& store, const BoundParams<T>& bound, const Tape<T>& tape,
               OptimizerState<T>& state) {
  std::vector<Tensor<T>*> params;
  std::vector<Tensor<T>> grads;
  auto& entries = store.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (!entries[i].trainable) continue;
    params.push_back(&entries[i].value);
    grads.push_back(tape.grad(bound.vars[i].id));
  }
  if (params.empty()) return;
  sgd_step<T>(params, grads, state);
}

}  // namespace cpcnn
