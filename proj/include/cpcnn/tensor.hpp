// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "cpcnn/error.hpp"

namespace cpcnn {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor. Untraced; see Tape/Var for the autodiff side.
/// Training runs on Tensor<float>, gradient checks on Tensor<double>.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // [C,H,W] accessors.
  T& at(int c, int y, int x) {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data_[(static_cast<std::size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  Tensor reshaped(Shape shape) const;
  void fill(T value);

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

template <typename T>
Tensor<T> tensor_add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> tensor_mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> tensor_scale(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> tensor_add_scalar(const Tensor<T>& a, T s);
template <typename T>
void accumulate_into(Tensor<T>& dst, const Tensor<T>& src);
template <typename T>
double tensor_sum(const Tensor<T>& a);
template <typename T>
bool all_finite(const Tensor<T>& a);

}  // namespace cpcnn
