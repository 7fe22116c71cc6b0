// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

// The parallel kernels must reproduce the serial reference bit for bit.

#include <gtest/gtest.h>

#include <vector>

#include "udd/kernels.hpp"
#include "udd/rng.hpp"

namespace udd::kernels {
namespace {

std::vector<double> randn(std::size_t n, std::uint64_t seed) {
  RngStream r(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = r.normal();
  return v;
}

struct Dims {
  std::size_t m, k, n;
};

class MatmulKernels : public ::testing::TestWithParam<Dims> {};

TEST_P(MatmulKernels, MatchReferenceBitwise) {
  const auto [m, k, n] = GetParam();
  const auto a = randn(m * k, 1), b = randn(k * n, 2), bt = randn(n * k, 3), at = randn(m * k, 4);
  const auto cm = randn(m * n, 5), ck = randn(k * n, 6);
  for (bool acc : {false, true}) {
    auto c1 = cm, c2 = cm;
    matmul_nn(a, b, c1, m, k, n, acc);
    reference::matmul_nn(a, b, c2, m, k, n, acc);
    EXPECT_EQ(c1, c2) << "nn acc=" << acc;

    c1 = cm, c2 = cm;
    matmul_nt(a, bt, c1, m, k, n, acc);
    reference::matmul_nt(a, bt, c2, m, k, n, acc);
    EXPECT_EQ(c1, c2) << "nt acc=" << acc;

    auto d1 = ck, d2 = ck;
    const auto bm = randn(m * n, 7);
    matmul_tn(at, bm, d1, m, k, n, acc);
    reference::matmul_tn(at, bm, d2, m, k, n, acc);
    EXPECT_EQ(d1, d2) << "tn acc=" << acc;
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, MatmulKernels,
                         ::testing::Values(Dims{1, 1, 1}, Dims{3, 5, 2}, Dims{65, 32, 32},
                                           Dims{260, 32, 128}, Dims{130, 128, 32}));

TEST(BatchedKernels, MatchReferenceBitwise) {
  const std::size_t t = 8, m = 65, k = 8, n = 65;
  const auto a = randn(t * m * k, 1), b = randn(t * k * n, 2), bt = randn(t * n * k, 3);
  std::vector<double> c1(t * m * n, 0.5), c2(t * m * n, 0.5);
  bmm_nn(a, b, c1, t, m, k, n, true);
  reference::bmm_nn(a, b, c2, t, m, k, n, true);
  EXPECT_EQ(c1, c2);
  bmm_nt(a, bt, c1, t, m, k, n, false);
  reference::bmm_nt(a, bt, c2, t, m, k, n, false);
  EXPECT_EQ(c1, c2);
  const auto g = randn(t * m * n, 4);
  std::vector<double> d1(t * k * n, 0.0), d2(t * k * n, 0.0);
  bmm_tn(a, g, d1, t, m, k, n, false);
  reference::bmm_tn(a, g, d2, t, m, k, n, false);
  EXPECT_EQ(d1, d2);
}

TEST(RowKernels, MatchReferenceBitwise) {
  const std::size_t rows = 520, cols = 65;
  const auto x = randn(rows * cols, 9);
  std::vector<double> y1(x.size()), y2(x.size());
  softmax_rows(x, y1, rows, cols);
  reference::softmax_rows(x, y2, rows, cols);
  EXPECT_EQ(y1, y2);

  const auto dy = randn(x.size(), 10);
  std::vector<double> g1(x.size(), 0.0), g2(x.size(), 0.0);
  softmax_rows_backward(y1, dy, g1, rows, cols);
  reference::softmax_rows_backward(y2, dy, g2, rows, cols);
  EXPECT_EQ(g1, g2);

  const auto gain = randn(cols, 11), bias = randn(cols, 12);
  std::vector<double> o1(x.size()), o2(x.size()), h1(x.size()), h2(x.size()), s1(rows), s2(rows);
  layer_norm_rows(x, gain, bias, o1, h1, s1, rows, cols, 1e-5);
  reference::layer_norm_rows(x, gain, bias, o2, h2, s2, rows, cols, 1e-5);
  EXPECT_EQ(o1, o2);
  EXPECT_EQ(h1, h2);
  EXPECT_EQ(s1, s2);

  gelu(x, y1);
  reference::gelu(x, y2);
  EXPECT_EQ(y1, y2);
  std::fill(g1.begin(), g1.end(), 0.0);
  std::fill(g2.begin(), g2.end(), 0.0);
  gelu_backward(x, dy, g1);
  reference::gelu_backward(x, dy, g2);
  EXPECT_EQ(g1, g2);
}

}  // namespace
}  // namespace udd::kernels
