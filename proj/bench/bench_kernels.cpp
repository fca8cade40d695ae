// Serial reference vs im2col/OpenMP convolution on UNet-sized layers.
//
//   ./build/bench/steerq_bench --benchmark_counters_tabular=true
//
// Args: batch, in channels, out channels, spatial size. OMP_NUM_THREADS sets
// the parallel team size.

#include <vector>

#include <benchmark/benchmark.h>
#include <omp.h>

#include "steerq/kernels.hpp"
#include "steerq/rng.hpp"

namespace {

using steerq::kernels::ConvGeometry;

struct Buffers {
  ConvGeometry g;
  std::vector<double> x, w, y;

  explicit Buffers(const benchmark::State& state) {
    g.batch = static_cast<int>(state.range(0));
    g.in_channels = static_cast<int>(state.range(1));
    g.out_channels = static_cast<int>(state.range(2));
    g.height = g.width = static_cast<int>(state.range(3));
    g.kernel = 3;
    g.pad = 1;
    steerq::Rng rng(7);
    x.resize(g.input_size());
    w.resize(g.kernel_size());
    y.resize(g.output_size());
    for (double& v : x) v = steerq::uniform01(rng) - 0.5;
    for (double& v : w) v = steerq::uniform01(rng) - 0.5;
  }

  double flops() const {
    return 2.0 * g.batch * g.out_channels * g.out_height() * g.out_width() * g.in_channels * g.kernel *
           g.kernel;
  }
};

template <auto Forward>
void forward(benchmark::State& state) {
  Buffers b(state);
  for (auto _ : state) {
    Forward(b.g, b.x.data(), b.w.data(), b.y.data());
    benchmark::DoNotOptimize(b.y.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(b.flops() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
  state.counters["threads"] = omp_get_max_threads();
}

template <auto BackwardInput, auto BackwardWeight>
void backward(benchmark::State& state) {
  Buffers b(state);
  std::vector<double> gx(b.x.size()), gw(b.w.size());
  for (auto _ : state) {
    BackwardInput(b.g, b.w.data(), b.y.data(), gx.data());
    BackwardWeight(b.g, b.x.data(), b.y.data(), gw.data());
    benchmark::DoNotOptimize(gx.data());
    benchmark::DoNotOptimize(gw.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * b.flops() * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
  state.counters["threads"] = omp_get_max_threads();
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({16, 8, 8, 16})->Args({16, 16, 16, 8})->Args({16, 32, 32, 4})->Args({64, 16, 16, 16});
  b->Unit(benchmark::kMicrosecond);
}

namespace ref = steerq::kernels::reference;
namespace par = steerq::kernels::parallel;

BENCHMARK(forward<ref::conv2d_forward>)->Name("conv2d_forward/serial")->Apply(shapes);
BENCHMARK(forward<par::conv2d_forward>)->Name("conv2d_forward/openmp")->Apply(shapes);
BENCHMARK(backward<ref::conv2d_backward_input, ref::conv2d_backward_weight>)
    ->Name("conv2d_backward/serial")
    ->Apply(shapes);
BENCHMARK(backward<par::conv2d_backward_input, par::conv2d_backward_weight>)
    ->Name("conv2d_backward/openmp")
    ->Apply(shapes);

}  // namespace

BENCHMARK_MAIN();
