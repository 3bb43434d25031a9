// OpenMP kernels against the serial reference loops on desk-sized shapes.
// Run with --benchmark_filter=conv to narrow; HAZEFUSE_THREADS is ignored
// here, use OMP_NUM_THREADS.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "hazefuse/kernels.hpp"

namespace k = hazefuse::kernels;

namespace {

std::vector<double> noise(std::size_t n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = d(rng);
    return v;
}

// Args: batch, channels, spatial size, kernel.
k::ConvGeometry conv_geometry(const benchmark::State& s) {
    const auto c = static_cast<std::size_t>(s.range(1));
    const auto hw = static_cast<std::size_t>(s.range(2));
    return {static_cast<std::size_t>(s.range(0)), c, c, hw, hw, static_cast<std::size_t>(s.range(3))};
}

struct ConvData {
    std::vector<double> x, w, b, y;
    explicit ConvData(const k::ConvGeometry& g)
        : x(noise(g.batch * g.in_channels * g.height * g.width, 1)),
          w(noise(g.out_channels * g.in_channels * g.kernel * g.kernel, 2)),
          b(noise(g.out_channels, 3)),
          y(noise(g.batch * g.out_channels * g.height * g.width, 4)) {}
};

template <bool Parallel>
void conv_forward(benchmark::State& s) {
    const auto g = conv_geometry(s);
    ConvData d(g);
    std::vector<double> out(d.y.size());
    for (auto _ : s) {
        if constexpr (Parallel) k::conv2d_forward(g, d.x, d.w, d.b, out);
        else k::reference::conv2d_forward(g, d.x, d.w, d.b, out);
        benchmark::DoNotOptimize(out.data());
    }
    s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(out.size()));
}

template <bool Parallel>
void conv_backward(benchmark::State& s) {
    const auto g = conv_geometry(s);
    ConvData d(g);
    std::vector<double> dx(d.x.size()), dw(d.w.size()), db(d.b.size());
    for (auto _ : s) {
        if constexpr (Parallel) {
            k::conv2d_backward_input(g, d.y, d.w, dx);
            k::conv2d_backward_params(g, d.y, d.x, dw, db);
        } else {
            k::reference::conv2d_backward_input(g, d.y, d.w, dx);
            k::reference::conv2d_backward_params(g, d.y, d.x, dw, db);
        }
        benchmark::DoNotOptimize(dx.data());
        benchmark::DoNotOptimize(dw.data());
    }
}

// Args: batch, m, n, k (attention-shaped products).
template <bool Parallel>
void gemm(benchmark::State& s) {
    const k::GemmGeometry g{static_cast<std::size_t>(s.range(0)), static_cast<std::size_t>(s.range(1)),
                            static_cast<std::size_t>(s.range(2)), static_cast<std::size_t>(s.range(3)), true, false};
    const auto a = noise(g.batch * g.m * g.k, 5);
    const auto b = noise(g.batch * g.k * g.n, 6);
    std::vector<double> c(g.batch * g.m * g.n);
    for (auto _ : s) {
        if constexpr (Parallel) k::gemm_batched(g, a, b, c, false);
        else k::reference::gemm_batched(g, a, b, c, false);
        benchmark::DoNotOptimize(c.data());
    }
    s.SetItemsProcessed(s.iterations() * static_cast<std::int64_t>(g.batch * g.m * g.n * g.k));
}

void conv_args(benchmark::internal::Benchmark* b) {
    b->Args({8, 8, 32, 3})->Args({8, 16, 16, 3})->Args({8, 16, 16, 1})->Args({1, 32, 64, 3});
}

void gemm_args(benchmark::internal::Benchmark* b) { b->Args({16, 256, 256, 8})->Args({8, 16, 16, 256}); }

}  // namespace

BENCHMARK(conv_forward<true>)->Name("conv_forward/omp")->Apply(conv_args);
BENCHMARK(conv_forward<false>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(conv_backward<true>)->Name("conv_backward/omp")->Apply(conv_args);
BENCHMARK(conv_backward<false>)->Name("conv_backward/reference")->Apply(conv_args);
BENCHMARK(gemm<true>)->Name("gemm/omp")->Apply(gemm_args);
BENCHMARK(gemm<false>)->Name("gemm/reference")->Apply(gemm_args);

BENCHMARK_MAIN();
