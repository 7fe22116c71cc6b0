// SPDX-FileCopyrightText: (c) 2026 The udd-desk Authors
//
// SPDX-License-Identifier: Apache-2.0

// Serial reference kernels against the OpenMP versions at the shapes the desk
// model actually runs: 32 images of 65 tokens, D=32, MLP width 128.

#include <benchmark/benchmark.h>

#include <vector>

#include "udd/kernels.hpp"
#include "udd/rng.hpp"
#include "udd/trainer.hpp"

namespace k = udd::kernels;
namespace ref = udd::kernels::reference;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
  udd::RngStream rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

constexpr std::size_t kRows = 32 * 65;

template <auto Fn>
void BM_matmul_nn(benchmark::State& state) {
  const auto m = kRows, kk = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  const auto a = filled(m * kk, 1), b = filled(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    Fn(a, b, c, m, kk, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * kk * n));
}

template <auto Fn>
void BM_matmul_tn(benchmark::State& state) {
  const auto m = kRows, kk = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1));
  const auto a = filled(m * kk, 1), b = filled(m * n, 2);
  std::vector<double> c(kk * n);
  for (auto _ : state) {
    Fn(a, b, c, m, kk, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * kk * n));
}

// Attention scores: batch*heads products of [65, hd] x [65, hd]^T.
template <auto Fn>
void BM_bmm_nt(benchmark::State& state) {
  const std::size_t batch = 32 * 4, m = 65, kk = 8, n = 65;
  const auto a = filled(batch * m * kk, 1), b = filled(batch * n * kk, 2);
  std::vector<double> c(batch * m * n);
  for (auto _ : state) {
    Fn(a, b, c, batch, m, kk, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * batch * m * kk * n));
}

template <auto Fn>
void BM_softmax(benchmark::State& state) {
  const std::size_t rows = 32 * 4 * 65, cols = 65;
  const auto x = filled(rows * cols, 3);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    Fn(x, y, rows, cols);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * cols));
}

template <auto Fn>
void BM_layer_norm(benchmark::State& state) {
  const std::size_t rows = kRows, cols = 32;
  const auto x = filled(rows * cols, 4), g = filled(cols, 5), b = filled(cols, 6);
  std::vector<double> y(x.size()), xhat(x.size()), inv(rows);
  for (auto _ : state) {
    Fn(x, g, b, y, xhat, inv, rows, cols, 1e-6);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * rows * cols));
}

template <auto Fn>
void BM_gelu(benchmark::State& state) {
  const auto x = filled(kRows * 128, 7);
  std::vector<double> y(x.size());
  for (auto _ : state) {
    Fn(x, y);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * x.size()));
}

// One optimizer step of the full three-branch objective on the desk model.
void BM_train_step(benchmark::State& state) {
  udd::TrainConfig cfg;
  cfg.branches = state.range(0) != 0;
  auto model = udd::Model::init(cfg.model, cfg.backbone_seed, cfg.seed);
  auto opt = udd::OptimizerState::for_params(udd::trainable_params(model));
  const std::size_t batch = 32;
  const auto images = udd::Tensor::from({batch, 3, 32, 32}, filled(batch * 3 * 32 * 32, 8));
  std::vector<int> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<int>(i % 2);
  std::vector<udd::RngStream> streams;
  for (std::size_t i = 0; i < batch; ++i) streams.emplace_back(9, i);
  const auto aug = udd::sample_step_augment(cfg, labels, streams, udd::RngStream(10));
  for (auto _ : state) {
    benchmark::DoNotOptimize(udd::three_branch_step(images, labels, model, opt, cfg, aug, 1e-5));
  }
}

}  // namespace

BENCHMARK(BM_matmul_nn<ref::matmul_nn>)->Name("matmul_nn/serial")->Args({32, 96})->Args({32, 128})->Args({128, 32});
BENCHMARK(BM_matmul_nn<k::matmul_nn>)->Name("matmul_nn/parallel")->Args({32, 96})->Args({32, 128})->Args({128, 32});
BENCHMARK(BM_matmul_tn<ref::matmul_tn>)->Name("matmul_tn/serial")->Args({32, 96})->Args({128, 32});
BENCHMARK(BM_matmul_tn<k::matmul_tn>)->Name("matmul_tn/parallel")->Args({32, 96})->Args({128, 32});
BENCHMARK(BM_bmm_nt<ref::bmm_nt>)->Name("bmm_nt/serial");
BENCHMARK(BM_bmm_nt<k::bmm_nt>)->Name("bmm_nt/parallel");
BENCHMARK(BM_softmax<ref::softmax_rows>)->Name("softmax_rows/serial");
BENCHMARK(BM_softmax<k::softmax_rows>)->Name("softmax_rows/parallel");
BENCHMARK(BM_layer_norm<ref::layer_norm_rows>)->Name("layer_norm_rows/serial");
BENCHMARK(BM_layer_norm<k::layer_norm_rows>)->Name("layer_norm_rows/parallel");
BENCHMARK(BM_gelu<ref::gelu>)->Name("gelu/serial");
BENCHMARK(BM_gelu<k::gelu>)->Name("gelu/parallel");
BENCHMARK(BM_train_step)->Name("train_step/baseline")->Arg(0)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_train_step)->Name("train_step/three_branch")->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
