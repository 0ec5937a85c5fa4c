// Kernel benchmarks: each numeric kernel in its OpenMP form against the
// serial reference, at sizes the encoder actually runs (C = 256 blocks on a
// 30s input).
//
// Run: ./build/bench/bench_kernels [--benchmark_filter=gemm]

#include <benchmark/benchmark.h>

#include <vector>

#include "sqz/kernels.hpp"
#include "sqz/reference.hpp"
#include "sqz/rng.hpp"

namespace {

std::vector<double> random_vec(int64_t n, uint64_t seed) {
  sqz::Rng rng(seed);
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

// y = x * W for a 750-frame activation block.
void bm_gemm_serial(benchmark::State& state) {
  const int64_t t = 750, c = state.range(0);
  auto a = random_vec(t * c, 1);
  auto b = random_vec(c * c, 2);
  std::vector<double> y(static_cast<size_t>(t * c));
  for (auto _ : state) {
    sqz::ref::gemm(false, false, t, c, c, a.data(), b.data(), y.data(), false);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_gemm_parallel(benchmark::State& state) {
  const int64_t t = 750, c = state.range(0);
  auto a = random_vec(t * c, 1);
  auto b = random_vec(c * c, 2);
  std::vector<double> y(static_cast<size_t>(t * c));
  for (auto _ : state) {
    sqz::kernels::gemm(false, false, t, c, c, a.data(), b.data(), y.data(),
                       false);
    benchmark::DoNotOptimize(y.data());
  }
}

// Depthwise conv at the conv-module kernel size.
void bm_depthwise_serial(benchmark::State& state) {
  const int64_t t = 750, c = state.range(0), k = 31;
  auto x = random_vec(t * c, 3);
  auto w = random_vec(c * k, 4);
  std::vector<double> y(static_cast<size_t>(t * c));
  for (auto _ : state) {
    sqz::ref::conv1d_depthwise(x.data(), t, c, w.data(), nullptr, k, 1, 15,
                               y.data(), t);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_depthwise_parallel(benchmark::State& state) {
  const int64_t t = 750, c = state.range(0), k = 31;
  auto x = random_vec(t * c, 3);
  auto w = random_vec(c * k, 4);
  std::vector<double> y(static_cast<size_t>(t * c));
  for (auto _ : state) {
    sqz::kernels::conv1d_depthwise(x.data(), t, c, w.data(), nullptr, k, 1, 15,
                                   y.data(), t);
    benchmark::DoNotOptimize(y.data());
  }
}

// The subsampling block's second convolution (the FLOPs hot spot).
void bm_conv2d_serial(benchmark::State& state) {
  const int64_t t = 188, f = 20, c = state.range(0);
  auto x = random_vec(t * f * c, 5);
  auto w = random_vec(c * 9 * c, 6);
  const int64_t to = (t + 1) / 2, fo = (f + 1) / 2;
  std::vector<double> y(static_cast<size_t>(to * fo * c));
  for (auto _ : state) {
    sqz::ref::conv2d(x.data(), t, f, c, w.data(), nullptr, c, 3, 3, 2, 2, 1, 1,
                     y.data(), to, fo);
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_conv2d_parallel(benchmark::State& state) {
  const int64_t t = 188, f = 20, c = state.range(0);
  auto x = random_vec(t * f * c, 5);
  auto w = random_vec(c * 9 * c, 6);
  const int64_t to = (t + 1) / 2, fo = (f + 1) / 2;
  std::vector<double> y(static_cast<size_t>(to * fo * c));
  for (auto _ : state) {
    sqz::kernels::conv2d(x.data(), t, f, c, w.data(), nullptr, c, 3, 3, 2, 2,
                         1, 1, y.data(), to, fo);
    benchmark::DoNotOptimize(y.data());
  }
}

// Attention-shaped softmax: h * T rows of length T.
void bm_softmax_serial(benchmark::State& state) {
  const int64_t rows = 4 * 750, cols = 750;
  auto x = random_vec(rows * cols, 7);
  std::vector<double> y(static_cast<size_t>(rows * cols));
  for (auto _ : state) {
    sqz::ref::softmax_rows(x.data(), rows, cols, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_softmax_parallel(benchmark::State& state) {
  const int64_t rows = 4 * 750, cols = 750;
  auto x = random_vec(rows * cols, 7);
  std::vector<double> y(static_cast<size_t>(rows * cols));
  for (auto _ : state) {
    sqz::kernels::softmax_rows(x.data(), rows, cols, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_layer_norm_serial(benchmark::State& state) {
  const int64_t rows = 750, cols = state.range(0);
  auto x = random_vec(rows * cols, 8);
  std::vector<double> gamma(static_cast<size_t>(cols), 1.0);
  std::vector<double> beta(static_cast<size_t>(cols), 0.0);
  std::vector<double> y(static_cast<size_t>(rows * cols));
  for (auto _ : state) {
    sqz::ref::layer_norm_rows(x.data(), gamma.data(), beta.data(), rows, cols,
                              1e-5, y.data());
    benchmark::DoNotOptimize(y.data());
  }
}

void bm_layer_norm_parallel(benchmark::State& state) {
  const int64_t rows = 750, cols = state.range(0);
  auto x = random_vec(rows * cols, 8);
  std::vector<double> gamma(static_cast<size_t>(cols), 1.0);
  std::vector<double> beta(static_cast<size_t>(cols), 0.0);
  std::vector<double> y(static_cast<size_t>(rows * cols));
  std::vector<double> mean(static_cast<size_t>(rows)),
      rstd(static_cast<size_t>(rows));
  for (auto _ : state) {
    sqz::kernels::layer_norm_rows(x.data(), gamma.data(), beta.data(), rows,
                                  cols, 1e-5, y.data(), mean.data(),
                                  rstd.data());
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(bm_gemm_serial)->Arg(144)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_gemm_parallel)->Arg(144)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_depthwise_serial)->Arg(256)->Arg(512);
BENCHMARK(bm_depthwise_parallel)->Arg(256)->Arg(512);
BENCHMARK(bm_conv2d_serial)->Arg(144)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_conv2d_parallel)->Arg(144)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_softmax_serial)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_softmax_parallel)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_layer_norm_serial)->Arg(256);
BENCHMARK(bm_layer_norm_parallel)->Arg(256);

BENCHMARK_MAIN();
