#include <benchmark/benchmark.h>

#include <vector>

#include "tmdit/kernels.hpp"
#include "tmdit/rng.hpp"

namespace k = tmdit::kernels;

namespace {

std::vector<double> random_buffer(std::size_t n, std::uint64_t seed) {
    tmdit::RngStream rng(seed);
    return rng.normals(n);
}

template <void (*Gemm)(std::int64_t, std::int64_t, std::int64_t, const double*, const double*, double*)>
void bm_gemm(benchmark::State& state) {
    const auto n = state.range(0);
    const auto a = random_buffer(static_cast<std::size_t>(n * n), 1);
    const auto b = random_buffer(static_cast<std::size_t>(n * n), 2);
    std::vector<double> c(static_cast<std::size_t>(n * n));
    for (auto _ : state) {
        std::fill(c.begin(), c.end(), 0.0);
        Gemm(n, n, n, a.data(), b.data(), c.data());
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}

template <void (*Softmax)(std::int64_t, std::int64_t, const double*, double*)>
void bm_softmax(benchmark::State& state) {
    const auto rows = state.range(0);
    const std::int64_t cols = 128;
    const auto x = random_buffer(static_cast<std::size_t>(rows * cols), 3);
    std::vector<double> y(x.size());
    for (auto _ : state) {
        Softmax(rows, cols, x.data(), y.data());
        benchmark::DoNotOptimize(y.data());
    }
}

}  // namespace

BENCHMARK(bm_gemm<k::serial::gemm_nn>)->Name("gemm_nn/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_gemm<k::omp::gemm_nn>)->Name("gemm_nn/omp")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_gemm<k::serial::gemm_nt>)->Name("gemm_nt/serial")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_gemm<k::omp::gemm_nt>)->Name("gemm_nt/omp")->Arg(32)->Arg(128)->Arg(256);
BENCHMARK(bm_softmax<k::serial::softmax_rows>)->Name("softmax/serial")->Arg(256)->Arg(4096);
BENCHMARK(bm_softmax<k::omp::softmax_rows>)->Name("softmax/omp")->Arg(256)->Arg(4096);

BENCHMARK_MAIN();
