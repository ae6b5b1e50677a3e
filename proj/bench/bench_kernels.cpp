// OpenMP kernels against their serial references, plus a full forward pass.
// Run with OMP_NUM_THREADS set to compare thread counts.

#include <benchmark/benchmark.h>

#include "pan/kernels.hpp"
#include "pan/network.hpp"

namespace {

pan::Matrix filled(std::size_t rows, std::size_t cols, std::uint64_t seed) {
    pan::Rng rng(seed);
    pan::Matrix m(rows, cols);
    for (auto& v : m.data()) v = rng.gaussian();
    return m;
}

using Kernel = pan::Matrix (*)(const pan::Matrix&, const pan::Matrix&);

// Square n x n operands, n = range(0).
template <Kernel K>
void BM_gemm(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const pan::Matrix a = filled(n, n, 1), b = filled(n, n, 2);
    for (auto _ : state) benchmark::DoNotOptimize(K(a, b));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}

void BM_forward(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    const pan::Mlp m = pan::make_mlp({784, width, width, 10}, {pan::PanMode::Multiplicative, 0.1, 1.0}, 1);
    const pan::Matrix x = filled(64, 784, 3);
    for (auto _ : state) benchmark::DoNotOptimize(pan::forward(m, x));
}

}  // namespace

BENCHMARK_TEMPLATE(BM_gemm, pan::kernels::gemm)->Name("gemm/omp")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK_TEMPLATE(BM_gemm, pan::kernels::serial::gemm)->Name("gemm/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK_TEMPLATE(BM_gemm, pan::kernels::gemm_nt)->Name("gemm_nt/omp")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK_TEMPLATE(BM_gemm, pan::kernels::serial::gemm_nt)->Name("gemm_nt/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK_TEMPLATE(BM_gemm, pan::kernels::gemm_tn)->Name("gemm_tn/omp")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK_TEMPLATE(BM_gemm, pan::kernels::serial::gemm_tn)->Name("gemm_tn/serial")->RangeMultiplier(4)->Range(16, 256);
BENCHMARK(BM_forward)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
