// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "udd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace udd::kernels {

namespace {

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

inline bool worth_parallel(std::size_t work) { return work >= kParallelWork; }

inline double gelu_scalar(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_grad_scalar(double x) {
  const double u = kGeluScale * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;

// R rows of c = a * b starting at row i. Each element is summed over kk in
// ascending order from 0.0, exactly like the reference loop; the tile only
// keeps an R x 8 block of partial sums in registers.
template <std::size_t R>
inline void nn_tile_rows(const double* a, const double* b, double* c, std::size_t i, std::size_t k,
                         std::size_t n, bool accumulate) {
  std::size_t j = 0;
  for (; j + kTileCols <= n; j += kTileCols) {
    double acc[R][kTileCols] = {};
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* bk = b + kk * n + j;
      for (std::size_t r = 0; r < R; ++r) {
        const double av = a[(i + r) * k + kk];
        for (std::size_t q = 0; q < kTileCols; ++q) acc[r][q] += av * bk[q];
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      double* cr = c + (i + r) * n + j;
      for (std::size_t q = 0; q < kTileCols; ++q) cr[q] = accumulate ? cr[q] + acc[r][q] : acc[r][q];
    }
  }
  for (; j < n; ++j) {
    for (std::size_t r = 0; r < R; ++r) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[(i + r) * k + kk] * b[kk * n + j];
      double& out = c[(i + r) * n + j];
      out = accumulate ? out + s : s;
    }
  }
}

// Rows [i0, i1) of c = a * b.
inline void nn_rows(const double* a, const double* b, double* c, std::size_t i0, std::size_t i1,
                    std::size_t k, std::size_t n, bool accumulate) {
  std::size_t i = i0;
  for (; i + kTileRows <= i1; i += kTileRows) nn_tile_rows<kTileRows>(a, b, c, i, k, n, accumulate);
  for (; i < i1; ++i) nn_tile_rows<1>(a, b, c, i, k, n, accumulate);
}

void transpose_into(const double* src, std::size_t rows, std::size_t cols, std::vector<double>& dst) {
  dst.resize(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = src[r * cols + c];
}

}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  const auto tiles = static_cast<std::int64_t>((m + kTileRows - 1) / kTileRows);
  const bool par = worth_parallel(m * k * n);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t t = 0; t < tiles; ++t) {
    const std::size_t i0 = static_cast<std::size_t>(t) * kTileRows;
    nn_rows(ap, bp, cp, i0, std::min(m, i0 + kTileRows), k, n, accumulate);
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // b is [n,k]; transpose once so the inner loop is contiguous.
  std::vector<double> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t kk = 0; kk < k; ++kk) bt[kk * n + j] = b[j * k + kk];
  matmul_nn(a, bt, c, m, k, n, accumulate);
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  // a is [m,k]; c[kk,:] = sum_i a[i,kk] * b[i,:]
  std::vector<double> at(k * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t kk = 0; kk < k; ++kk) at[kk * m + i] = a[i * k + kk];
  matmul_nn(at, b, c, k, m, n, accumulate);
}

void bmm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const bool par = batch > 1 && worth_parallel(batch * m * k * n);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(batch); ++t) {
    nn_rows(a.data() + t * m * k, b.data() + t * k * n, c.data() + t * m * n, 0, m, k, n, accumulate);
  }
}

void bmm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const bool par = batch > 1 && worth_parallel(batch * m * k * n);
#pragma omp parallel if (par)
  {
    std::vector<double> bt;
#pragma omp for schedule(static)
    for (std::int64_t t = 0; t < static_cast<std::int64_t>(batch); ++t) {
      transpose_into(b.data() + t * n * k, n, k, bt);
      nn_rows(a.data() + t * m * k, bt.data(), c.data() + t * m * n, 0, m, k, n, accumulate);
    }
  }
}

void bmm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const bool par = batch > 1 && worth_parallel(batch * m * k * n);
#pragma omp parallel if (par)
  {
    std::vector<double> at;
#pragma omp for schedule(static)
    for (std::int64_t t = 0; t < static_cast<std::int64_t>(batch); ++t) {
      transpose_into(a.data() + t * m * k, m, k, at);
      nn_rows(at.data(), b.data() + t * m * n, c.data() + t * k * n, 0, k, m, n, accumulate);
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols) {
  const bool par = worth_parallel(rows * cols * 8);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const double* xr = x.data() + r * cols;
    double* yr = y.data() + r * cols;
    double mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      s += yr[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < cols; ++j) yr[j] *= inv;
  }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols) {
  const bool par = worth_parallel(rows * cols * 4);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const double* yr = y.data() + r * cols;
    const double* gr = dy.data() + r * cols;
    double* dr = dx.data() + r * cols;
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += gr[j] * yr[j];
    for (std::size_t j = 0; j < cols; ++j) dr[j] += yr[j] * (gr[j] - dot);
  }
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t rows, std::size_t cols, double eps) {
  const bool par = worth_parallel(rows * cols * 8);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const double* xr = x.data() + r * cols;
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += xr[j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < cols; ++j) {
      const double h = (xr[j] - mu) * is;
      xhat[r * cols + j] = h;
      y[r * cols + j] = h * gain[j] + bias[j];
    }
  }
}

void gelu(std::span<const double> x, std::span<double> y) {
  const auto n = static_cast<std::int64_t>(x.size());
  const bool par = worth_parallel(x.size() * 16);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  const auto n = static_cast<std::int64_t>(x.size());
  const bool par = worth_parallel(x.size() * 16);
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < n; ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

namespace reference {

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[kk * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += a[i * k + kk] * b[j * k + kk];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < m; ++i) s += a[i * k + kk] * b[i * n + j];
      c[kk * n + j] = accumulate ? c[kk * n + j] + s : s;
    }
  }
}

void bmm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t t = 0; t < batch; ++t)
    matmul_nn(a.subspan(t * m * k, m * k), b.subspan(t * k * n, k * n),
              c.subspan(t * m * n, m * n), m, k, n, accumulate);
}

void bmm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t t = 0; t < batch; ++t)
    matmul_nt(a.subspan(t * m * k, m * k), b.subspan(t * n * k, n * k),
              c.subspan(t * m * n, m * n), m, k, n, accumulate);
}

void bmm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t t = 0; t < batch; ++t)
    matmul_tn(a.subspan(t * m * k, m * k), b.subspan(t * m * n, m * n),
              c.subspan(t * k * n, k * n), m, k, n, accumulate);
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mx = x[r * cols];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[r * cols + j]);
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      y[r * cols + j] = std::exp(x[r * cols + j] - mx);
      s += y[r * cols + j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < cols; ++j) y[r * cols + j] *= inv;
  }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    double dot = 0.0;
    for (std::size_t j = 0; j < cols; ++j) dot += dy[r * cols + j] * y[r * cols + j];
    for (std::size_t j = 0; j < cols; ++j)
      dx[r * cols + j] += y[r * cols + j] * (dy[r * cols + j] - dot);
  }
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t rows, std::size_t cols, double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    double mu = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mu += x[r * cols + j];
    mu /= static_cast<double>(cols);
    double var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) var += (x[r * cols + j] - mu) * (x[r * cols + j] - mu);
    var /= static_cast<double>(cols);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < cols; ++j) {
      xhat[r * cols + j] = (x[r * cols + j] - mu) * inv_std[r];
      y[r * cols + j] = xhat[r * cols + j] * gain[j] + bias[j];
    }
  }
}

void gelu(std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] += dy[i] * gelu_grad_scalar(x[i]);
}

}  // namespace reference

}  // namespace udd::kernels
