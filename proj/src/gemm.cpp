// SPDX-License-Identifier: Apache-2.0
#include "cpcnn/gemm.hpp"

#include <algorithm>
#include <cstring>
#include <vector>

namespace cpcnn {

namespace {

constexpr int kMr = 8;
constexpr int kNr = 32;
constexpr int kKc = 256;
constexpr int kMc = 96;
constexpr int kNc = 512;

using v16f = float __attribute__((vector_size(64)));

inline v16f load16(const float* p) {
  v16f v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store16(float* p, v16f v) { std::memcpy(p, &v, sizeof(v)); }

void pack_a(int mc, int kc, const MatView<float>& a, int row0, int col0, float* dst) {
  for (int p = 0; p < mc; p += kMr) {
    const int rows = std::min(kMr, mc - p);
    for (int kk = 0; kk < kc; ++kk) {
      const float* src = a.data + (col0 + kk) * a.col_stride;
      int r = 0;
      for (; r < rows; ++r) dst[r] = src[(row0 + p + r) * a.row_stride];
      for (; r < kMr; ++r) dst[r] = 0.0f;
      dst += kMr;
    }
  }
}

void pack_b(int kc, int nc, const MatView<float>& b, int row0, int col0, float* dst) {
  for (int q = 0; q < nc; q += kNr) {
    const int cols = std::min(kNr, nc - q);
    for (int kk = 0; kk < kc; ++kk) {
      const float* src = b.data + (row0 + kk) * b.row_stride + (col0 + q) * b.col_stride;
      if (b.col_stride == 1 && cols == kNr) {
        std::memcpy(dst, src, sizeof(float) * kNr);
      } else {
        int j = 0;
        for (; j < cols; ++j) dst[j] = src[j * b.col_stride];
        for (; j < kNr; ++j) dst[j] = 0.0f;
      }
      dst += kNr;
    }
  }
}

void micro_kernel(int kc, const float* ap, const float* bp, float* c, std::ptrdiff_t ldc, int mr,
                  int nr, bool add_to_c) {
  v16f acc[kMr][2] = {};
  for (int p = 0; p < kc; ++p) {
    const v16f b0 = load16(bp);
    const v16f b1 = load16(bp + 16);
#pragma GCC unroll 8
    for (int r = 0; r < kMr; ++r) {
      const float av = ap[r];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
    ap += kMr;
    bp += kNr;
  }
  if (mr == kMr && nr == kNr) {
    for (int r = 0; r < kMr; ++r) {
      float* row = c + r * ldc;
      if (add_to_c) {
        store16(row, load16(row) + acc[r][0]);
        store16(row + 16, load16(row + 16) + acc[r][1]);
      } else {
        store16(row, acc[r][0]);
        store16(row + 16, acc[r][1]);
      }
    }
    return;
  }
  alignas(64) float tile[kMr][kNr];
  for (int r = 0; r < kMr; ++r) {
    store16(&tile[r][0], acc[r][0]);
    store16(&tile[r][16], acc[r][1]);
  }
  for (int r = 0; r < mr; ++r) {
    float* row = c + r * ldc;
    for (int j = 0; j < nr; ++j) row[j] = add_to_c ? row[j] + tile[r][j] : tile[r][j];
  }
}

void gemm_f32(int m, int n, int k, MatView<float> a, MatView<float> b, float* c,
              std::ptrdiff_t ldc, bool accumulate) {
  if (k == 0) {
    if (!accumulate) {
      for (int i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0f);
    }
    return;
  }
  thread_local std::vector<float> a_pack;
  thread_local std::vector<float> b_pack;
  a_pack.resize(static_cast<std::size_t>(kMc) * kKc);
  b_pack.resize(static_cast<std::size_t>(kKc) * (kNc + kNr));

  for (int jc = 0; jc < n; jc += kNc) {
    const int nc = std::min(kNc, n - jc);
    for (int pc = 0; pc < k; pc += kKc) {
      const int kc = std::min(kKc, k - pc);
      const bool add_to_c = accumulate || pc > 0;
      pack_b(kc, nc, b, pc, jc, b_pack.data());
      for (int ic = 0; ic < m; ic += kMc) {
        const int mc = std::min(kMc, m - ic);
        pack_a(mc, kc, a, ic, pc, a_pack.data());
        for (int jr = 0; jr < nc; jr += kNr) {
          const float* bp = b_pack.data() + static_cast<std::size_t>(jr) * kc;
          for (int ir = 0; ir < mc; ir += kMr) {
            const float* ap = a_pack.data() + static_cast<std::size_t>(ir) * kc;
            micro_kernel(kc, ap, bp, c + (ic + ir) * ldc + jc + jr, ldc,
                         std::min(kMr, mc - ir), std::min(kNr, nc - jr), add_to_c);
          }
        }
      }
    }
  }
}

template <typename T>
void gemm_reference(int m, int n, int k, MatView<T> a, MatView<T> b, T* c, std::ptrdiff_t ldc,
                    bool accumulate) {
  for (int i = 0; i < m; ++i) {
    T* row = c + i * ldc;
    if (!accumulate) std::fill(row, row + n, T(0));
    for (int p = 0; p < k; ++p) {
      const T av = a.data[i * a.row_stride + p * a.col_stride];
      if (av == T(0)) continue;
      const T* brow = b.data + p * b.row_stride;
      for (int j = 0; j < n; ++j) row[j] += av * brow[j * b.col_stride];
    }
  }
}

}  // namespace

template <>
void gemm<float>(int m, int n, int k, MatView<float> a, MatView<float> b, float* c,
                 std::ptrdiff_t ldc, bool accumulate) {
  gemm_f32(m, n, k, a, b, c, ldc, accumulate);
}

template <>
void gemm<double>(int m, int n, int k, MatView<double> a, MatView<double> b, double* c,
                  std::ptrdiff_t ldc, bool accumulate) {
  gemm_reference(m, n, k, a, b, c, ldc, accumulate);
}

}  // namespace cpcnn
