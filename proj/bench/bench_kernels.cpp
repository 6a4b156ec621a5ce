// Copyright 2026 The stylevc Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Parallel kernels against their serial reference implementations.

#include <benchmark/benchmark.h>

#include "stylevc/kernels.hpp"
#include "stylevc/rng.hpp"

namespace {

using stylevc::Matrix;
namespace k = stylevc::kernels;

Matrix random(std::size_t r, std::size_t c, std::uint64_t seed) {
  stylevc::Rng rng(seed);
  return rng.normal_matrix(r, c);
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_matmul_nt(benchmark::State& st) {
  const auto m = static_cast<std::size_t>(st.range(0)), n = static_cast<std::size_t>(st.range(1)),
             kk = static_cast<std::size_t>(st.range(2));
  const Matrix a = random(m, kk, 1), b = random(n, kk, 2);
  for (auto _ : st) benchmark::DoNotOptimize(F(a, b));
  st.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * kk, benchmark::Counter::kIsIterationInvariantRate,
                                             benchmark::Counter::kIs1000);
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_matmul_nn(benchmark::State& st) {
  const auto m = static_cast<std::size_t>(st.range(0)), n = static_cast<std::size_t>(st.range(1)),
             kk = static_cast<std::size_t>(st.range(2));
  const Matrix a = random(m, kk, 1), b = random(kk, n, 2);
  for (auto _ : st) benchmark::DoNotOptimize(F(a, b));
  st.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * kk, benchmark::Counter::kIsIterationInvariantRate,
                                             benchmark::Counter::kIs1000);
}

template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_matmul_tn(benchmark::State& st) {
  const auto m = static_cast<std::size_t>(st.range(0)), n = static_cast<std::size_t>(st.range(1)),
             kk = static_cast<std::size_t>(st.range(2));
  const Matrix a = random(kk, m, 1), b = random(kk, n, 2);
  for (auto _ : st) benchmark::DoNotOptimize(F(a, b));
  st.counters["GFLOPS"] = benchmark::Counter(2.0 * m * n * kk, benchmark::Counter::kIsIterationInvariantRate,
                                             benchmark::Counter::kIs1000);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({64, 32, 32})->Args({64, 64, 32})->Args({64, 80, 32})->Args({256, 128, 128})->Args({512, 256, 256});
}

Matrix softmax_par(const Matrix& x, const Matrix&) { return k::softmax_rows(x); }
Matrix softmax_ref(const Matrix& x, const Matrix&) { return k::reference::softmax_rows(x); }
Matrix layernorm_par(const Matrix& x, const Matrix&) { return k::layer_norm_rows(x, 1e-5); }
Matrix layernorm_ref(const Matrix& x, const Matrix&) { return k::reference::layer_norm_rows(x, 1e-5); }
Matrix instnorm_par(const Matrix& x, const Matrix&) { return k::instance_norm_cols(x, 1e-8); }
Matrix instnorm_ref(const Matrix& x, const Matrix&) { return k::reference::instance_norm_cols(x, 1e-8); }

template <Matrix (*F)(const Matrix&, const Matrix&)>
void bm_rowwise(benchmark::State& st) {
  const Matrix x = random(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)), 3);
  for (auto _ : st) benchmark::DoNotOptimize(F(x, x));
}

template <bool Parallel>
void bm_depthwise(benchmark::State& st) {
  const auto L = static_cast<std::size_t>(st.range(0)), C = static_cast<std::size_t>(st.range(1));
  const Matrix x = random(L, C, 4), w = random(15, C, 5), bias = random(1, C, 6);
  for (auto _ : st) {
    if constexpr (Parallel)
      benchmark::DoNotOptimize(k::depthwise_conv1d(x, w, bias));
    else
      benchmark::DoNotOptimize(k::reference::depthwise_conv1d(x, w, bias));
  }
}

}  // namespace

BENCHMARK(bm_matmul_nt<k::matmul_nt>)->Apply(shapes);
BENCHMARK(bm_matmul_nt<k::reference::matmul_nt>)->Apply(shapes);
BENCHMARK(bm_matmul_nn<k::matmul_nn>)->Apply(shapes);
BENCHMARK(bm_matmul_nn<k::reference::matmul_nn>)->Apply(shapes);
BENCHMARK(bm_matmul_tn<k::matmul_tn>)->Apply(shapes);
BENCHMARK(bm_matmul_tn<k::reference::matmul_tn>)->Apply(shapes);
BENCHMARK(bm_rowwise<softmax_par>)->Args({64, 64})->Args({512, 512});
BENCHMARK(bm_rowwise<softmax_ref>)->Args({64, 64})->Args({512, 512});
BENCHMARK(bm_rowwise<layernorm_par>)->Args({64, 32})->Args({512, 256});
BENCHMARK(bm_rowwise<layernorm_ref>)->Args({64, 32})->Args({512, 256});
BENCHMARK(bm_rowwise<instnorm_par>)->Args({64, 32})->Args({512, 256});
BENCHMARK(bm_rowwise<instnorm_ref>)->Args({64, 32})->Args({512, 256});
BENCHMARK(bm_depthwise<true>)->Args({64, 64})->Args({512, 256});
BENCHMARK(bm_depthwise<false>)->Args({64, 64})->Args({512, 256});

BENCHMARK_MAIN();
