// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "cpcnn/tape.hpp"

namespace cpcnn {

// Traced elementwise and reduction ops. Each records one tape node.

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> a, T s);
template <typename T>
Var<T> add_scalar(Var<T> a, T s);

/// Sum of all elements, shape [1].
template <typename T>
Var<T> sum(Var<T> a);
/// Mean of all elements, shape [1].
template <typename T>
Var<T> mean(Var<T> a);
/// |x|; subgradient 0 at x == 0.
template <typename T>
Var<T> abs(Var<T> a);
template <typename T>
Var<T> square(Var<T> a);
template <typename T>
Var<T> log(Var<T> a);
/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi);
template <typename T>
Var<T> reshape(Var<T> a, Shape shape);
/// Concatenate [C_i,H,W] tensors along the channel axis.
template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

}  // namespace cpcnn
