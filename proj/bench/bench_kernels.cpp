// Parallel kernels against their serial references on VGG-sized layers.
// Set OMP_NUM_THREADS to vary the parallel side.

#include <benchmark/benchmark.h>

#include <vector>

#include "gramtex/kernels.hpp"
#include "gramtex/random.hpp"

namespace k = gramtex::kernels;

namespace {

std::vector<float> values(std::size_t n, std::uint64_t seed) {
  gramtex::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

k::ConvGeometry geometry(const benchmark::State& state) {
  const auto c = std::size_t(state.range(0)), hw = std::size_t(state.range(1));
  return {1, c, hw, hw, c, 3, 3, 1, 1, hw, hw};
}

struct ConvData {
  k::ConvGeometry g;
  std::vector<float> x, w, b, y;
  explicit ConvData(const k::ConvGeometry& geo)
      : g(geo),
        x(values(g.batch * g.in_channels * g.in_h * g.in_w, 1)),
        w(values(g.out_channels * g.in_channels * 9, 2)),
        b(values(g.out_channels, 3)),
        y(g.batch * g.out_channels * g.out_h * g.out_w) {}
};

void set_conv_counters(benchmark::State& state, const k::ConvGeometry& g) {
  const double flops = 2.0 * g.out_channels * g.in_channels * 9 * g.out_h * g.out_w;
  state.counters["GFLOP/s"] = benchmark::Counter(flops * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Parallel>
void BM_ConvForward(benchmark::State& state) {
  ConvData d(geometry(state));
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward<float>(d.g, d.x, d.w, d.b, d.y);
    else
      k::reference::conv2d_forward<float>(d.g, d.x, d.w, d.b, d.y);
    benchmark::DoNotOptimize(d.y.data());
  }
  set_conv_counters(state, d.g);
}

template <bool Parallel>
void BM_ConvBackwardInput(benchmark::State& state) {
  ConvData d(geometry(state));
  std::vector<float> gi(d.x.size());
  for (auto _ : state) {
    std::fill(gi.begin(), gi.end(), 0.f);
    if constexpr (Parallel)
      k::conv2d_backward_input<float>(d.g, d.y, d.w, gi);
    else
      k::reference::conv2d_backward_input<float>(d.g, d.y, d.w, gi);
    benchmark::DoNotOptimize(gi.data());
  }
  set_conv_counters(state, d.g);
}

template <bool Parallel>
void BM_ConvBackwardWeight(benchmark::State& state) {
  ConvData d(geometry(state));
  std::vector<float> gw(d.w.size()), gb(d.b.size());
  for (auto _ : state) {
    std::fill(gw.begin(), gw.end(), 0.f);
    std::fill(gb.begin(), gb.end(), 0.f);
    if constexpr (Parallel)
      k::conv2d_backward_weight<float>(d.g, d.y, d.x, gw, gb);
    else
      k::reference::conv2d_backward_weight<float>(d.g, d.y, d.x, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
  set_conv_counters(state, d.g);
}

template <bool Parallel>
void BM_Gram(benchmark::State& state) {
  const auto c = std::size_t(state.range(0)), m = std::size_t(state.range(1) * state.range(1));
  const auto f = values(c * m, 4);
  std::vector<float> g(c * c);
  for (auto _ : state) {
    if constexpr (Parallel)
      k::gram_forward<float>(1, c, m, f, g);
    else
      k::reference::gram_forward<float>(1, c, m, f, g);
    benchmark::DoNotOptimize(g.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * c * c * m * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

// (channels, spatial extent): early and late VGG stages at 64x64 input.
void conv_args(benchmark::internal::Benchmark* b) { b->Args({64, 64})->Args({256, 16})->Args({512, 8}); }
void gram_args(benchmark::internal::Benchmark* b) { b->Args({64, 64})->Args({256, 16})->Args({512, 8}); }

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<true>)->Name("conv_backward_input/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardInput<false>)->Name("conv_backward_input/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<true>)->Name("conv_backward_weight/parallel")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackwardWeight<false>)->Name("conv_backward_weight/reference")->Apply(conv_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gram<true>)->Name("gram/parallel")->Apply(gram_args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Gram<false>)->Name("gram/reference")->Apply(gram_args)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
