// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace cpcnn {

/// Strided matrix view: element (r, c) lives at data[r * row_stride + c * col_stride].
/// Transposes are expressed by swapping the strides.
template <typename T>
struct MatView {
  const T* data;
  std::ptrdiff_t row_stride;
  std::ptrdiff_t col_stride;
};

/// C[M,N] = A[M,K] * B[K,N] (or += when accumulate). C is row-major with leading dim ldc.
/// The float path is packed and cache-blocked; the summation order depends only on the
/// shapes, so results are bit-reproducible run to run.
template <typename T>
void gemm(int m, int n, int k, MatView<T> a, MatView<T> b, T* c, std::ptrdiff_t ldc,
          bool accumulate);

}  // namespace cpcnn
