// Reference vs parallel conv kernels at the shapes the toy generator and
// discriminator actually run.

#include "csg0/kernels.hpp"
#include "csg0/rng.hpp"

#include <benchmark/benchmark.h>
#include <malloc.h>

#include <vector>

namespace {

using csg0::kernels::ConvGeometry;
namespace ref = csg0::kernels::reference;
namespace par = csg0::kernels::parallel;

ConvGeometry geometry(const benchmark::State& state) {
    ConvGeometry g;
    g.batch = 1;
    g.in_channels = static_cast<std::size_t>(state.range(0));
    g.out_channels = static_cast<std::size_t>(state.range(1));
    g.height = static_cast<std::size_t>(state.range(2));
    g.width = g.height * 3 / 2;
    g.kernel = 3;
    g.padding = 1;
    return g;
}

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
    csg0::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.uniform(-1, 1);
    }
    return v;
}

template <auto Fn>
void forward(benchmark::State& state) {
    const auto g = geometry(state);
    const auto x = filled(g.input_size(), 1);
    const auto w = filled(g.weight_size(), 2);
    const auto b = filled(g.out_channels, 3);
    std::vector<double> y(g.output_size());
    for (auto _ : state) {
        Fn(g, x, w, b, y);
        benchmark::DoNotOptimize(y.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(g.output_size() * g.in_channels * 9));
}

template <auto Fn>
void backward_input(benchmark::State& state) {
    const auto g = geometry(state);
    const auto w = filled(g.weight_size(), 2);
    const auto dy = filled(g.output_size(), 4);
    std::vector<double> dx(g.input_size());
    for (auto _ : state) {
        Fn(g, w, dy, dx);
        benchmark::DoNotOptimize(dx.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(g.output_size() * g.in_channels * 9));
}

template <auto Fn>
void backward_params(benchmark::State& state) {
    const auto g = geometry(state);
    const auto x = filled(g.input_size(), 1);
    const auto dy = filled(g.output_size(), 4);
    std::vector<double> dw(g.weight_size());
    std::vector<double> db(g.out_channels);
    for (auto _ : state) {
        Fn(g, x, dy, dw, db);
        benchmark::DoNotOptimize(dw.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<long>(g.output_size() * g.in_channels * 9));
}

// {Cin, Cout, H}: generator blocks and a discriminator level.
void shapes(benchmark::internal::Benchmark* b) {
    b->Args({64, 32, 8})->Args({32, 16, 16})->Args({16, 16, 32})->Args({32, 32, 16})->Unit(benchmark::kMicrosecond);
}

BENCHMARK(forward<ref::conv2d_forward>)->Name("conv_forward/reference")->Apply(shapes);
BENCHMARK(forward<par::conv2d_forward>)->Name("conv_forward/parallel")->Apply(shapes);
BENCHMARK(backward_input<ref::conv2d_backward_input>)->Name("conv_backward_input/reference")->Apply(shapes);
BENCHMARK(backward_input<par::conv2d_backward_input>)->Name("conv_backward_input/parallel")->Apply(shapes);
BENCHMARK(backward_params<ref::conv2d_backward_params>)->Name("conv_backward_params/reference")->Apply(shapes);
BENCHMARK(backward_params<par::conv2d_backward_params>)->Name("conv_backward_params/parallel")->Apply(shapes);

} // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 32 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    benchmark::Initialize(&argc, argv);
    if (benchmark::ReportUnrecognizedArguments(argc, argv)) {
        return 1;
    }
    benchmark::RunSpecifiedBenchmarks();
    benchmark::Shutdown();
    return 0;
}
