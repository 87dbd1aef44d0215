// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>
#include <utility>
#include <vector>

#include "cpcnn/tape.hpp"

namespace cpcnn {

/// Convolution geometry. Weights are [out, in, k, k], bias [out].
/// padding < 0 means "same" padding (k-1)/2, which needs an odd kernel.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 3;
  int stride = 1;
  int padding = -1;

  int pad() const { return padding < 0 ? (kernel - 1) / 2 : padding; }
  void validate() const;
  /// Output (H', W'); throws if (H + 2p - k) is not a multiple of the stride.
  std::pair<int, int> output_hw(int h, int w) const;
};

/// Fractionally-strided convolution, fixed at kernel 4 / stride 2 / padding 1 so the
/// output is exactly twice the input in both spatial dims. Weights are [in, out, 4, 4].
struct TransposedConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  static constexpr int kernel = 4;
  static constexpr int stride = 2;
  static constexpr int padding = 1;

  void validate() const;
};

enum class Mode { kTrain, kEval };

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, const ConvSpec& spec);

template <typename T>
Var<T> transposed_conv2d(Var<T> x, Var<T> weight, Var<T> bias, const TransposedConvSpec& spec);

/// 2x2 / stride 2 max-pool. Odd extents are replicate-padded, so the output is
/// ceil(H/2) x ceil(W/2). Gradient goes to the first maximal element in row-major order.
template <typename T>
Var<T> maxpool2(Var<T> x);

template <typename T>
Var<T> relu(Var<T> x);

/// Per-channel PReLU on [C,H,W]; `slope` has shape [C].
template <typename T>
Var<T> prelu(Var<T> x, Var<T> slope);

template <typename T>
Var<T> sigmoid(Var<T> x);

/// y = W x + b with x [n] (any shape with n elements), W [m,n], b [m].
template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> weight, Var<T> bias);

/// Inverted dropout. Identity in eval mode or at rate 0.
template <typename T>
Var<T> dropout(Var<T> x, T rate, Mode mode, std::mt19937_64& rng);

/// -log softmax(logits)[label]; shape [1].
template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, int label);

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits);

// Raw kernels shared with the layer ops and exposed for tests.
template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            T* cols);
template <typename T>
void col2im_add(const T* cols, int channels, int h, int w, int k, int stride, int pad, int out_h,
                int out_w, T* x);

}  // namespace cpcnn
