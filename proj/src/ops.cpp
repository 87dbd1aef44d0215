// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cpcnn {

namespace {

template <typename T>
void require_same_tape(Var<T> a, Var<T> b, const char* what) {
  if (a.tape != b.tape) fail(ErrorCode::kContractViolation, std::string(what) + ": vars on different tapes");
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "add");
  Tensor<T> out = tensor_add(a.value(), b.value());
  return a.tape->record("add", std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    if (t.requires_grad(a.id)) accumulate_into(t.grad_buffer(a.id), g);
    if (t.requires_grad(b.id)) accumulate_into(t.grad_buffer(b.id), g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "sub");
  require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<T> out(a.shape());
  const Tensor<T>& av = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return a.tape->record("sub", std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    if (t.requires_grad(a.id)) accumulate_into(t.grad_buffer(a.id), g);
    if (t.requires_grad(b.id)) {
      Tensor<T>& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_tape(a, b, "mul");
  Tensor<T> out = tensor_mul(a.value(), b.value());
  return a.tape->record("mul", std::move(out), {a.id, b.id}, [a, b](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& av = t.value(a.id);
    const Tensor<T>& bv = t.value(b.id);
    if (t.requires_grad(a.id)) {
      Tensor<T>& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(b.id)) {
      Tensor<T>& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return a.tape->record("scale", tensor_scale(a.value(), s), {a.id}, [a, s](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    Tensor<T>& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * s;
  });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  return a.tape->record("add_scalar", tensor_add_scalar(a.value(), s), {a.id},
                        [a](Tape<T>& t, NodeId self) {
                          accumulate_into(t.grad_buffer(a.id), t.grad_buffer(self));
                        });
}

template <typename T>
Var<T> sum(Var<T> a) {
  T s = T(0);
  for (T v : a.value().data()) s += v;
  return a.tape->record("sum", Tensor<T>({1}, s), {a.id}, [a](Tape<T>& t, NodeId self) {
    const T g = t.grad_buffer(self)[0];
    for (T& v : t.grad_buffer(a.id).data()) v += g;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  const T n = static_cast<T>(a.value().size());
  T s = T(0);
  for (T v : a.value().data()) s += v;
  return a.tape->record("mean", Tensor<T>({1}, s / n), {a.id}, [a, n](Tape<T>& t, NodeId self) {
    const T g = t.grad_buffer(self)[0] / n;
    for (T& v : t.grad_buffer(a.id).data()) v += g;
  });
}

template <typename T>
Var<T> abs(Var<T> a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::abs(av[i]);
  return a.tape->record("abs", std::move(out), {a.id}, [a](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& x = t.value(a.id);
    Tensor<T>& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > T(0)) ga[i] += g[i];
      else if (x[i] < T(0)) ga[i] -= g[i];
    }
  });
}

template <typename T>
Var<T> square(Var<T> a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * av[i];
  return a.tape->record("square", std::move(out), {a.id}, [a](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& x = t.value(a.id);
    Tensor<T>& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += T(2) * x[i] * g[i];
  });
}

template <typename T>
Var<T> log(Var<T> a) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::log(av[i]);
  return a.tape->record("log", std::move(out), {a.id}, [a](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& x = t.value(a.id);
    Tensor<T>& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / x[i];
  });
}

template <typename T>
Var<T> clamp(Var<T> a, T lo, T hi) {
  const Tensor<T>& av = a.value();
  Tensor<T> out(av.shape());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::min(std::max(av[i], lo), hi);
  return a.tape->record("clamp", std::move(out), {a.id}, [a, lo, hi](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    const Tensor<T>& x = t.value(a.id);
    Tensor<T>& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (x[i] > lo && x[i] < hi) ga[i] += g[i];
    }
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  return a.tape->record("reshape", a.value().reshaped(std::move(shape)), {a.id},
                        [a](Tape<T>& t, NodeId self) {
                          const Tensor<T>& g = t.grad_buffer(self);
                          Tensor<T>& ga = t.grad_buffer(a.id);
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                        });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts) {
  if (parts.empty()) fail(ErrorCode::kInvalidArgument, "concat_channels: no inputs");
  const Shape& s0 = parts[0].shape();
  if (s0.size() != 3) fail(ErrorCode::kShapeMismatch, "concat_channels: expected [C,H,W], got " + shape_str(s0));
  int channels = 0;
  std::vector<NodeId> ids;
  for (const Var<T>& p : parts) {
    const Shape& s = p.shape();
    if (p.tape != parts[0].tape) fail(ErrorCode::kContractViolation, "concat_channels: vars on different tapes");
    if (s.size() != 3 || s[1] != s0[1] || s[2] != s0[2]) {
      fail(ErrorCode::kShapeMismatch,
           "concat_channels: spatial mismatch " + shape_str(s0) + " vs " + shape_str(s));
    }
    channels += s[0];
    ids.push_back(p.id);
  }
  Tensor<T> out({channels, s0[1], s0[2]});
  std::size_t offset = 0;
  for (const Var<T>& p : parts) {
    const Tensor<T>& v = p.value();
    std::memcpy(out.ptr() + offset, v.ptr(), v.size() * sizeof(T));
    offset += v.size();
  }
  std::vector<Var<T>> captured = parts;
  return parts[0].tape->record("concat", std::move(out), ids, [captured](Tape<T>& t, NodeId self) {
    const Tensor<T>& g = t.grad_buffer(self);
    std::size_t off = 0;
    for (const Var<T>& p : captured) {
      const std::size_t n = t.value(p.id).size();
      if (t.requires_grad(p.id)) {
        Tensor<T>& gp = t.grad_buffer(p.id);
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
      }
      off += n;
    }
  });
}

#define CPCNN_INSTANTIATE(T)                                        \
  template Var<T> add(Var<T>, Var<T>);                              \
  template Var<T> sub(Var<T>, Var<T>);                              \
  template Var<T> mul(Var<T>, Var<T>);                              \
  template Var<T> scale(Var<T>, T);                                 \
  template Var<T> add_scalar(Var<T>, T);                            \
  template Var<T> sum(Var<T>);                                      \
  template Var<T> mean(Var<T>);                                     \
  template Var<T> abs(Var<T>);                                      \
  template Var<T> square(Var<T>);                                   \
  template Var<T> log(Var<T>);                                      \
  template Var<T> clamp(Var<T>, T, T);                              \
  template Var<T> reshape(Var<T>, Shape);                           \
  template Var<T> concat_channels(const std::vector<Var<T>>&);

CPCNN_INSTANTIATE(float)
CPCNN_INSTANTIATE(double)
#undef CPCNN_INSTANTIATE

}  // namespace cpcnn
