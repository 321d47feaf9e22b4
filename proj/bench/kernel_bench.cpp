// Copyright 2026 The topomo Authors
// SPDX-License-Identifier: Apache-2.0

// Serial reference vs OpenMP kernels. Run with OMP_NUM_THREADS=<n> to compare
// scaling; results are bitwise identical by construction.

#include <benchmark/benchmark.h>

#include "topomo/numerics/kernels.hpp"
#include "topomo/numerics/random.hpp"

namespace {

using topomo::Rng;
using topomo::Tensor;
namespace kernels = topomo::kernels;

template <Tensor (*Fn)(const Tensor&, const Tensor&)>
void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = topomo::randn({n, n}, rng, 1.0), b = topomo::randn({n, n}, rng, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}

template <kernels::SoftmaxResult (*Fn)(const Tensor&, const Tensor*)>
void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor x = topomo::randn({n, n}, rng, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, nullptr));
}

template <Tensor (*Fn)(const Tensor&, const Tensor&, const Tensor&, double)>
void BM_LayerNorm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor x = topomo::randn({n, n}, rng, 1.0);
  const Tensor g({n}, 1.0), o({n});
  for (auto _ : state) benchmark::DoNotOptimize(Fn(x, g, o, 1e-5));
}

BENCHMARK(BM_Matmul<kernels::serial::matmul>)->Name("matmul/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<kernels::parallel::matmul>)->Name("matmul/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<kernels::serial::matmul_nt>)->Name("matmul_nt/serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Matmul<kernels::parallel::matmul_nt>)->Name("matmul_nt/parallel")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Softmax<kernels::serial::softmax_rows>)->Name("softmax/serial")->Range(64, 512);
BENCHMARK(BM_Softmax<kernels::parallel::softmax_rows>)->Name("softmax/parallel")->Range(64, 512);
BENCHMARK(BM_LayerNorm<kernels::serial::layer_norm>)->Name("layer_norm/serial")->Range(64, 512);
BENCHMARK(BM_LayerNorm<kernels::parallel::layer_norm>)->Name("layer_norm/parallel")->Range(64, 512);

}  // namespace

BENCHMARK_MAIN();
