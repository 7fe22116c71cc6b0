// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

// Dense inner loops used by the tensor ops.
//
// Every kernel exists twice: `udd::kernels::*` is the OpenMP version used by
// the library, `udd::kernels::reference::*` is a plain serial loop kept for
// tests and the benchmark. The parallel versions split work over output rows
// only, so each output element is summed in the same order as the reference
// and the two agree bitwise for any thread count.

namespace udd::kernels {

/// c[m,n] (+)= a[m,k] * b[k,n]
void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
/// c[m,n] (+)= a[m,k] * b[n,k]^T
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
/// c[k,n] (+)= a[m,k]^T * b[m,n]
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// Batched variants over a leading axis of `batch` independent products;
/// parallel over the batch index.
void bmm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void bmm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void bmm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate);

/// Row-wise softmax over contiguous rows of length `cols`.
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols);
/// dx = y * (dy - sum(dy * y)) per row, accumulated into dx.
void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols);

/// Normalizes rows; writes normalized values (pre-affine) and per-row 1/std.
void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t rows, std::size_t cols, double eps);

void gelu(std::span<const double> x, std::span<double> y);
void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

namespace reference {

void matmul_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void bmm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void bmm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void bmm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t batch, std::size_t m, std::size_t k, std::size_t n, bool accumulate);
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols);
void softmax_rows_backward(std::span<const double> y, std::span<const double> dy,
                           std::span<double> dx, std::size_t rows, std::size_t cols);
void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y, std::span<double> xhat,
                     std::span<double> inv_std, std::size_t rows, std::size_t cols, double eps);
void gelu(std::span<const double> x, std::span<double> y);
void gelu_backward(std::span<const double> x, std::span<const double> dy, std::span<double> dx);

}  // namespace reference

int max_threads();

}  // namespace udd::kernels
