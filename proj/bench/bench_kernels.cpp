// Reference loops vs the im2col/GEMM + OpenMP kernels at the extractor's
// layer sizes. Set COVERS_WORKERS to control the thread count.

#include <benchmark/benchmark.h>

#include "covers/kernels.hpp"

#include <random>
#include <vector>

using covers::kernels::ConvGeometry;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

// Second conv of the default extractor on a minibatch of 64.
ConvGeometry layer_geometry(int batch) { return {batch, 16, 8, 8, 32, 4, 4, 2, 1}; }

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
    const auto g = layer_geometry(static_cast<int>(state.range(0)));
    const auto x = noise(static_cast<std::size_t>(g.batch * g.in_channels * g.height * g.width), 1);
    const auto k = noise(static_cast<std::size_t>(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w), 2);
    std::vector<double> y(static_cast<std::size_t>(g.batch * g.out_channels * g.out_height() * g.out_width()));
    for (auto _ : state) {
        if constexpr (Reference)
            covers::kernels::conv2d_forward_reference(g, x, k, y);
        else
            covers::kernels::conv2d_forward(g, x, k, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * g.batch);
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
    const auto g = layer_geometry(static_cast<int>(state.range(0)));
    const auto x = noise(static_cast<std::size_t>(g.batch * g.in_channels * g.height * g.width), 1);
    const auto k = noise(static_cast<std::size_t>(g.out_channels * g.in_channels * g.kernel_h * g.kernel_w), 2);
    const auto dy = noise(static_cast<std::size_t>(g.batch * g.out_channels * g.out_height() * g.out_width()), 3);
    std::vector<double> dx(x.size()), dk(k.size());
    for (auto _ : state) {
        if constexpr (Reference)
            covers::kernels::conv2d_backward_reference(g, x, k, dy, dx, dk);
        else
            covers::kernels::conv2d_backward(g, x, k, dy, dx, dk);
        benchmark::DoNotOptimize(dx.data());
    }
    state.SetItemsProcessed(state.iterations() * g.batch);
}

template <bool Reference>
void BM_PairwiseDistances(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const int m = 512;
    const int dim = 136;
    const auto x = noise(static_cast<std::size_t>(n * dim), 4);
    const auto y = noise(static_cast<std::size_t>(m * dim), 5);
    std::vector<double> d(static_cast<std::size_t>(n * m));
    for (auto _ : state) {
        if constexpr (Reference)
            covers::kernels::pairwise_distances_reference(n, m, dim, x, y, d);
        else
            covers::kernels::pairwise_distances(n, m, dim, x, y, d);
        benchmark::DoNotOptimize(d.data());
    }
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Arg(64);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/gemm_omp")->Arg(64);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Arg(64);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/gemm")->Arg(64);
BENCHMARK(BM_PairwiseDistances<true>)->Name("pairwise/reference")->Arg(64);
BENCHMARK(BM_PairwiseDistances<false>)->Name("pairwise/omp")->Arg(64);

int main(int argc, char** argv) {
    covers::kernels::configure_workers_from_env();
    benchmark::Initialize(&argc, argv);
    benchmark::RunSpecifiedBenchmarks();
    return 0;
}
