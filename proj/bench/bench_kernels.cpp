// Serial reference vs OpenMP kernels on model-sized shapes.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lvst/kernels.hpp"
#include "lvst/params.hpp"

namespace ks = lvst::kernels::serial;
namespace kp = lvst::kernels::parallel;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = 2.0 * lvst::uniform01(rng) - 1.0;
  return v;
}

template <bool Parallel, bool TransB>
void BM_Gemm(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0)), n = static_cast<std::size_t>(state.range(1)),
             k = static_cast<std::size_t>(state.range(2));
  const auto a = random_vec(m * k, 1), b = random_vec(k * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : state) {
    if constexpr (Parallel)
      kp::gemm(false, TransB, m, n, k, a.data(), b.data(), c.data(), false);
    else
      ks::gemm(false, TransB, m, n, k, a.data(), b.data(), c.data(), false);
    benchmark::DoNotOptimize(c.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * double(m * n * k), benchmark::Counter::kIsIterationInvariantRate, benchmark::Counter::kIs1000);
}

template <bool Parallel>
void BM_Attention(benchmark::State& state) {
  lvst::kernels::AttentionDims dims{static_cast<std::size_t>(state.range(0)), static_cast<std::size_t>(state.range(1)),
                                    4, 8};
  const std::size_t tok = dims.groups * dims.len * dims.width();
  const auto q = random_vec(tok, 3), k = random_vec(tok, 4), v = random_vec(tok, 5);
  std::vector<double> mask(dims.len * dims.len, 1.0);
  std::vector<double> probs(dims.groups * dims.heads * dims.len * dims.len), out(tok);
  lvst::kernels::AttentionArgs args{dims, q.data(), k.data(), v.data(), mask.data(), lvst::kernels::MaskMode::kHard,
                                    nullptr};
  for (auto _ : state) {
    if constexpr (Parallel)
      kp::attention_forward(args, probs.data(), out.data());
    else
      ks::attention_forward(args, probs.data(), out.data());
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Dtw(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto series = random_vec(n * 288, 6);
  for (auto _ : state) {
    auto m = Parallel ? kp::dtw_matrix(n, 288, series.data()) : ks::dtw_matrix(n, 288, series.data());
    benchmark::DoNotOptimize(m.data());
  }
}

template <bool Parallel>
void BM_FloydWarshall(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto base = random_vec(n * n, 7);
  for (double& x : base) x = x > 0.6 ? 1.0 + x : INFINITY;
  for (std::size_t i = 0; i < n; ++i) base[i * n + i] = 0.0;
  std::vector<double> d(base.size());
  for (auto _ : state) {
    d = base;
    if constexpr (Parallel)
      kp::floyd_warshall(n, d.data());
    else
      ks::floyd_warshall(n, d.data());
    benchmark::DoNotOptimize(d.data());
  }
}

}  // namespace

BENCHMARK(BM_Gemm<false, false>)->Args({1920, 32, 32})->Args({1920, 128, 32})->Args({160, 12, 384});
BENCHMARK(BM_Gemm<true, false>)->Args({1920, 32, 32})->Args({1920, 128, 32})->Args({160, 12, 384});
BENCHMARK(BM_Gemm<false, true>)->Args({1920, 32, 32})->Args({1920, 128, 32});
BENCHMARK(BM_Gemm<true, true>)->Args({1920, 32, 32})->Args({1920, 128, 32});
BENCHMARK(BM_Attention<false>)->Args({192, 10})->Args({160, 12});
BENCHMARK(BM_Attention<true>)->Args({192, 10})->Args({160, 12});
BENCHMARK(BM_Dtw<false>)->Arg(20)->Arg(50);
BENCHMARK(BM_Dtw<true>)->Arg(20)->Arg(50);
BENCHMARK(BM_FloydWarshall<false>)->Arg(170)->Arg(307);
BENCHMARK(BM_FloydWarshall<true>)->Arg(170)->Arg(307);

BENCHMARK_MAIN();
