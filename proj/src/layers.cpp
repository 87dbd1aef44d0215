// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include "cpcnn/gemm.hpp"

namespace cpcnn {

void ConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0 || kernel <= 0 || stride <= 0) {
    fail(ErrorCode::kInvalidArgument, "ConvSpec: channels, kernel and stride must be positive");
  }
  if (padding < 0 && kernel % 2 == 0) {
    fail(ErrorCode::kInvalidArgument, "ConvSpec: same padding needs an odd kernel, got " + std::to_string(kernel));
  }
}

std::pair<int, int> ConvSpec::output_hw(int h, int w) const {
  validate();
  const int p = pad();
  const int span_h = h + 2 * p - kernel;
  const int span_w = w + 2 * p - kernel;
  if (h < 1 || w < 1 || span_h < 0 || span_w < 0 || span_h % stride != 0 || span_w % stride != 0) {
    fail(ErrorCode::kShapeMismatch,
         "conv2d: non-integral output size for input " + std::to_string(h) + "x" + std::to_string(w) +
             " with kernel " + std::to_string(kernel) + ", stride " + std::to_string(stride) +
             ", padding " + std::to_string(p));
  }
  return {span_h / stride + 1, span_w / stride + 1};
}

void TransposedConvSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    fail(ErrorCode::kInvalidArgument, "TransposedConvSpec: channels must be positive");
  }
}

template <typename T>
void im2col(const T* x, int channels, int h, int w, int k, int stride, int pad, int out_h, int out_w,
            T* cols) {
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          T* dst = row + static_cast<std::size_t>(oy) * out_w;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          if (stride == 1) {
            // ix = ox - pad + kj must lie in [0, w)
            const int lo = std::clamp(pad - kj, 0, out_w);
            const int hi = std::clamp(w + pad - kj, lo, out_w);
            std::fill(dst, dst + lo, T(0));
            if (hi > lo) std::memcpy(dst + lo, src + (lo - pad + kj), sizeof(T) * (hi - lo));
            std::fill(dst + hi, dst + out_w, T(0));
          } else {
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - pad + kj;
              dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int channels, int h, int w, int k, int stride, int pad, int out_h,
                int out_w, T* x) {
  const std::size_t n = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    T* plane = x + static_cast<std::size_t>(c) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(c) * k * k + ki * k + kj) * n;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ki;
          if (iy < 0 || iy >= h) continue;
          T* dst = plane + static_cast<std::size_t>(iy) * w;
          const T* src = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kj;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

namespace {

void require_rank3(const Shape& s, const char* what) {
  if (s.size() != 3) fail(ErrorCode::kShapeMismatch, std::string(what) + ": expected [C,H,W], got " + shape_str(s));
}

template <typename T>
void add_channel_bias(T* out, const T* bias, int channels, std::size_t plane) {
  for (int c = 0; c < channels; ++c) {
    T* p = out + c * plane;
    const T b = bias[c];
    for (std::size_t i = 0; i < plane; ++i) p[i] += b;
  }
}

template <typename T>
void accumulate_channel_sums(const T* g, int channels, std::size_t plane, T* gb) {
  for (int c = 0; c < channels; ++c) {
    const T* p = g + c * plane;
    T s = T(0);
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    gb[c] += s;
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias, const ConvSpec& spec) {
  const Shape& xs = x.shape();
  require_rank3(xs, "conv2d");
  spec.validate();
  if (xs[0] != spec.in_channels) {
    fail(ErrorCode::kShapeMismatch, "conv2d: input has " + std::to_string(xs[0]) + " channels, spec expects " +
                                        std::to_string(spec.in_channels));
  }
  const int k = spec.kernel;
  require_same_shape(weight.shape(), Shape{spec.out_channels, spec.in_channels, k, k}, "conv2d weight");
  require_same_shape(bias.shape(), Shape{spec.out_channels}, "conv2d bias");
  const auto [oh, ow] = spec.output_hw(xs[1], xs[2]);
  const int stride = spec.stride;
  const int pad = spec.pad();
  const int cin = xs[0], h = xs[1], w = xs[2], cout = spec.out_channels;
  const int kdim = cin * k * k;
  const int n = oh * ow;
  const bool pointwise = k == 1 && stride == 1 && pad == 0;

  thread_local std::vector<T> cols;
  const T* cols_ptr = x.value().ptr();
  if (!pointwise) {
    cols.resize(static_cast<std::size_t>(kdim) * n);
    im2col(x.value().ptr(), cin, h, w, k, stride, pad, oh, ow, cols.data());
    cols_ptr = cols.data();
  }
  Tensor<T> out({cout, oh, ow});
  gemm<T>(cout, n, kdim, {weight.value().ptr(), kdim, 1}, {cols_ptr, n, 1}, out.ptr(), n, false);
  add_channel_bias(out.ptr(), bias.value().ptr(), cout, static_cast<std::size_t>(n));

  return x.tape->record(
      "conv2d", std::move(out), {x.id, weight.id, bias.id},
      [=](Tape<T>& t, NodeId self) {
        const Tensor<T>& g = t.grad_buffer(self);
        const Tensor<T>& xv = t.value(x.id);
        const Tensor<T>& wv = t.value(weight.id);
        if (t.requires_grad(weight.id)) {
          thread_local std::vector<T> bcols;
          const T* cp = xv.ptr();
          if (!pointwise) {
            bcols.resize(static_cast<std::size_t>(kdim) * n);
            im2col(xv.ptr(), cin, h, w, k, stride, pad, oh, ow, bcols.data());
            cp = bcols.data();
          }
          gemm<T>(cout, kdim, n, {g.ptr(), n, 1}, {cp, 1, n}, t.grad_buffer(weight.id).ptr(), kdim, true);
        }
        if (t.requires_grad(bias.id)) {
          accumulate_channel_sums(g.ptr(), cout, static_cast<std::size_t>(n), t.grad_buffer(bias.id).ptr());
        }
        if (t.requires_grad(x.id)) {
          Tensor<T>& gx = t.grad_buffer(x.id);
          if (pointwise) {
            gemm<T>(kdim, n, cout, {wv.ptr(), 1, kdim}, {g.ptr(), n, 1}, gx.ptr(), n, true);
          } else {
            thread_local std::vector<T> dcols;
            dcols.resize(static_cast<std::size_t>(kdim) * n);
            gemm<T>(kdim, n, cout, {wv.ptr(), 1, kdim}, {g.ptr(), n, 1}, dcols.data(), n, false);
            col2im_add(dcols.data(), cin, h, w, k, stride, pad, oh, ow, gx.ptr());
          }
        }
      });
}

template <typename T>
Var<T> transposed_conv2d(Var<T> x, Var<T> weight, Var<T> bias, const TransposedConvSpec& spec) {
  const Shape& xs = x.shape();
  require_rank3(xs, "transposed_conv2d");
  spec.validate();
  if (xs[0] != spec.in_channels) {
    fail(ErrorCode::kShapeMismatch, "transposed_conv2d: input has " + std::to_string(xs[0]) +
                                        " channels, spec expects " + std::to_string(spec.in_channels));
  }
  constexpr int k = TransposedConvSpec::kernel;
  constexpr int stride = TransposedConvSpec::stride;
  constexpr int pad = TransposedConvSpec::padding;
  const int cin = xs[0], h = xs[1], w = xs[2], cout = spec.out_channels;
  require_same_shape(weight.shape(), Shape{cin, cout, k, k}, "transposed_conv2d weight");
  require_same_shape(bias.shape(), Shape{cout}, "transposed_conv2d bias");
  const int oh = (h - 1) * stride - 2 * pad + k;
  const int ow = (w - 1) * stride - 2 * pad + k;
  const int rows = cout * k * k;
  const int n = h * w;

  thread_local std::vector<T> cols;
  cols.resize(static_cast<std::size_t>(rows) * n);
  gemm<T>(rows, n, cin, {weight.value().ptr(), 1, rows}, {x.value().ptr(), n, 1}, cols.data(), n, false);
  Tensor<T> out({cout, oh, ow});
  col2im_add(cols.data(), cout, oh, ow, k, stride, pad, h, w, out.ptr());
  add_channel_bias(out.ptr(), bias.value().ptr(), cout, static_cast<std::size_t>(oh) * ow);

  return x.tape->record(
      "transposed_conv2d", std::move(out), {x.id, weight.id, bias.id},
      [=](Tape<T>& t, NodeId self) {
        const Tensor<T>& g = t.grad_buffer(self);
        thread_local std::vector<T> dcols;
        dcols.resize(static_cast<std::size_t>(rows) * n);
        im2col(g.ptr(), cout, oh, ow, k, stride, pad, h, w, dcols.data());
        if (t.requires_grad(x.id)) {
          gemm<T>(cin, n, rows, {t.value(weight.id).ptr(), rows, 1}, {dcols.data(), n, 1},
                  t.grad_buffer(x.id).ptr(), n, true);
        }
        if (t.requires_grad(weight.id)) {
          gemm<T>(cin, rows, n, {t.value(x.id).ptr(), n, 1}, {dcols.data(), 1, n},
                  t.grad_buffer(weight.id).ptr(), rows, true);
        }
        if (t.requires_grad(bias.id)) {
          accumulate_channel_sums(g.ptr(), cout, static_cast<std::size_t>(oh) * ow,
                                  t.grad_buffer(bias.id).ptr());
        }
      });
}

namespace {

// Index of the first maximum of the 2x2 window at (oy, ox), row-major over the
// window, with out-of-range taps replicated from the last row/column.
template <typename T>
std::size_t window_argmax(const T* plane, int h, int w, int oy, int ox) {
  std::size_t best = 0;
  bool have = false;
  T best_v = T(0);
  for (int dy = 0; dy < 2; ++dy) {
    const int iy = std::min(2 * oy + dy, h - 1);
    for (int dx = 0; dx < 2; ++dx) {
      const int ix = std::min(2 * ox + dx, w - 1);
      const std::size_t idx = static_cast<std::size_t>(iy) * w + ix;
      if (!have || plane[idx] > best_v) {
        best = idx;
        best_v = plane[idx];
        have = true;
      }
    }
  }
  return best;
}

}  // namespace

template <typename T>
Var<T> maxpool2(Var<T> x) {
  const Shape& xs = x.shape();
  require_rank3(xs, "maxpool2");
  const int c = xs[0], h = xs[1], w = xs[2];
  const int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor<T> out({c, oh, ow});
  const T* in = x.value().ptr();
  for (int ch = 0; ch < c; ++ch) {
    const T* plane = in + static_cast<std::size_t>(ch) * h * w;
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) out.at(ch, oy, ox) = plane[window_argmax(plane, h, w, oy, ox)];
    }
  }
  return x.tape->record("maxpool2", std::move(out), {x.id}, [=](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const T* xin = t.value(x.id).ptr();
    T* gx = t.grad_buffer(x.id).ptr();
    for (int ch = 0; ch < c; ++ch) {
      const std::size_t off = static_cast<std::size_t>(ch) * h * w;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) gx[off + window_argmax(xin + off, h, w, oy, ox)] += g.at(ch, oy, ox);
      }
    }
  });
}

template <typename T>
Var<T> relu(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
  return x.tape->record("relu", std::move(out), {x.id}, [x](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& xin = t.value(x.id);
    Tensor<T>& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xin[i] > T(0)) gx[i] += g[i];
    }
  });
}

template <typename T>
Var<T> prelu(Var<T> x, Var<T> slope) {
  const Shape& xs = x.shape();
  require_rank3(xs, "prelu");
  require_same_shape(slope.shape(), Shape{xs[0]}, "prelu slope");
  const std::size_t plane = static_cast<std::size_t>(xs[1]) * xs[2];
  const Tensor<T>& xv = x.value();
  const Tensor<T>& a = slope.value();
  Tensor<T> out(xs);
  for (int c = 0; c < xs[0]; ++c) {
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) out[i] = xv[i] > T(0) ? xv[i] : a[c] * xv[i];
  }
  const int channels = xs[0];
  return x.tape->record("prelu", std::move(out), {x.id, slope.id}, [=](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& xin = t.value(x.id);
    const Tensor<T>& av = t.value(slope.id);
    const bool want_x = t.requires_grad(x.id);
    const bool want_a = t.requires_grad(slope.id);
    for (int c = 0; c < channels; ++c) {
      T ga = T(0);
      for (std::size_t i = c * plane; i < (c + 1) * plane; ++i) {
        if (xin[i] > T(0)) {
          if (want_x) t.grad_buffer(x.id)[i] += g[i];
        } else {
          if (want_x) t.grad_buffer(x.id)[i] += av[c] * g[i];
          ga += g[i] * xin[i];
        }
      }
      if (want_a) t.grad_buffer(slope.id)[c] += ga;
    }
  });
}

template <typename T>
Var<T> sigmoid(Var<T> x) {
  const Tensor<T>& xv = x.value();
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const T v = xv[i];
    if (v >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T(1) + e);
    }
  }
  return x.tape->record("sigmoid", std::move(out), {x.id}, [x](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (T(1) - y[i]);
  });
}

template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> weight, Var<T> bias) {
  const Shape& ws = weight.shape();
  if (ws.size() != 2) fail(ErrorCode::kShapeMismatch, "fully_connected: weight must be [m,n], got " + shape_str(ws));
  const int m = ws[0], n = ws[1];
  if (x.value().size() != static_cast<std::size_t>(n)) {
    fail(ErrorCode::kShapeMismatch, "fully_connected: input " + shape_str(x.shape()) + " vs weight " + shape_str(ws));
  }
  require_same_shape(bias.shape(), Shape{m}, "fully_connected bias");
  Tensor<T> out({m});
  const T* wp = weight.value().ptr();
  const T* xp = x.value().ptr();
  const T* bp = bias.value().ptr();
  for (int i = 0; i < m; ++i) {
    T s = T(0);
    const T* row = wp + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) s += row[j] * xp[j];
    out[i] = s + bp[i];
  }
  return x.tape->record("fully_connected", std::move(out), {x.id, weight.id, bias.id},
                        [=](Tape<T>& t, NodeId self) {
                          const Tensor<T>& g = t.grad_buffer(self);
                          const T* xin = t.value(x.id).ptr();
                          const T* win = t.value(weight.id).ptr();
                          if (t.requires_grad(weight.id)) {
                            T* gw = t.grad_buffer(weight.id).ptr();
                            for (int i = 0; i < m; ++i) {
                              T* row = gw + static_cast<std::size_t>(i) * n;
                              for (int j = 0; j < n; ++j) row[j] += g[i] * xin[j];
                            }
                          }
                          if (t.requires_grad(bias.id)) {
                            Tensor<T>& gb = t.grad_buffer(bias.id);
                            for (int i = 0; i < m; ++i) gb[i] += g[i];
                          }
                          if (t.requires_grad(x.id)) {
                            T* gx = t.grad_buffer(x.id).ptr();
                            for (int i = 0; i < m; ++i) {
                              const T* row = win + static_cast<std::size_t>(i) * n;
                              for (int j = 0; j < n; ++j) gx[j] += row[j] * g[i];
                            }
                          }
                        });
}

template <typename T>
Var<T> dropout(Var<T> x, T rate, Mode mode, std::mt19937_64& rng) {
  if (!(rate >= T(0)) || rate >= T(1)) {
    fail(ErrorCode::kInvalidArgument, "dropout: rate must be in [0,1), got " + std::to_string(static_cast<double>(rate)));
  }
  if (mode == Mode::kEval || rate == T(0)) return x;
  const Tensor<T>& xv = x.value();
  auto mask = std::make_shared<std::vector<T>>(xv.size());
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const T inv = T(1) / (T(1) - rate);
  Tensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    (*mask)[i] = keep(rng) ? inv : T(0);
    out[i] = xv[i] * (*mask)[i];
  }
  return x.tape->record("dropout", std::move(out), {x.id}, [x, mask](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    Tensor<T>& gx = t.grad_buffer(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (*mask)[i];
  });
}

template <typename T>
std::vector<T> softmax(const std::vector<T>& logits) {
  const T mx = *std::max_element(logits.begin(), logits.end());
  std::vector<T> p(logits.size());
  T z = T(0);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (T& v : p) v /= z;
  return p;
}

template <typename T>
Var<T> softmax_cross_entropy(Var<T> logits, int label) {
  const Tensor<T>& lv = logits.value();
  const int n = static_cast<int>(lv.size());
  if (label < 0 || label >= n) {
    fail(ErrorCode::kInvalidArgument, "softmax_cross_entropy: label " + std::to_string(label) +
                                          " out of range [0," + std::to_string(n) + ")");
  }
  const std::vector<T> z(lv.data().begin(), lv.data().end());
  const T mx = *std::max_element(z.begin(), z.end());
  T s = T(0);
  for (T v : z) s += std::exp(v - mx);
  const T loss = mx + std::log(s) - z[static_cast<std::size_t>(label)];
  return logits.tape->record("softmax_cross_entropy", Tensor<T>({1}, loss), {logits.id},
                             [logits, label](Tape<T>& t, NodeId self) {
                               const T g = t.grad_buffer(self)[0];
                               const Tensor<T>& lin = t.value(logits.id);
                               const std::vector<T> p = softmax(std::vector<T>(lin.data().begin(), lin.data().end()));
                               Tensor<T>& gl = t.grad_buffer(logits.id);
                               for (std::size_t i = 0; i < p.size(); ++i) {
                                 gl[i] += g * (p[i] - (static_cast<int>(i) == label ? T(1) : T(0)));
                               }
                             });
}

#define CPCNN_INSTANTIATE(T)                                                                      \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>, const ConvSpec&);                                \
  template Var<T> transposed_conv2d(Var<T>, Var<T>, Var<T>, const TransposedConvSpec&);          \
  template Var<T> maxpool2(Var<T>);                                                               \
  template Var<T> relu(Var<T>);                                                                   \
  template Var<T> prelu(Var<T>, Var<T>);                                                          \
  template Var<T> sigmoid(Var<T>);                                                                \
  template Var<T> fully_connected(Var<T>, Var<T>, Var<T>);                                        \
  template Var<T> dropout(Var<T>, T, Mode, std::mt19937_64&);                                     \
  template Var<T> softmax_cross_entropy(Var<T>, int);                                             \
  template std::vector<T> softmax(const std::vector<T>&);                                         \
  template void im2col(const T*, int, int, int, int, int, int, int, int, T*);                     \
  template void col2im_add(const T*, int, int, int, int, int, int, int, int, T*);

CPCNN_INSTANTIATE(float)
CPCNN_INSTANTIATE(double)
#undef CPCNN_INSTANTIATE

}  // namespace cpcnn
