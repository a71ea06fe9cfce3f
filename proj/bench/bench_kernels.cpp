#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "phr/numerics/kernels.hpp"

namespace k = phr::nn::kernels;

namespace {

struct Case {
  k::ConvGeometry g;
  std::vector<float> in, w, b, out, gout, gin, gw, gb;
};

Case make_case(std::size_t c, std::size_t hw, std::size_t ksize, std::size_t stride) {
  const std::size_t pad = stride == 2 ? 1 : ksize / 2;
  Case cs;
  cs.g = k::make_conv_geometry(c, hw, hw, c, ksize, ksize, stride, stride, pad, pad);
  std::mt19937 rng(7);
  std::uniform_real_distribution<float> d(-1.f, 1.f);
  auto fill = [&](std::vector<float>& v, std::size_t n) {
    v.resize(n);
    for (auto& x : v) x = d(rng);
  };
  fill(cs.in, cs.g.in_size());
  fill(cs.w, cs.g.weight_size());
  fill(cs.b, cs.g.out_c);
  fill(cs.gout, cs.g.out_size());
  cs.out.assign(cs.g.out_size(), 0.f);
  cs.gin.assign(cs.g.in_size(), 0.f);
  cs.gw.assign(cs.g.weight_size(), 0.f);
  cs.gb.assign(cs.g.out_c, 0.f);
  return cs;
}

void set_flops(benchmark::State& state, const k::ConvGeometry& g) {
  const double macs = double(g.out_size()) * g.in_c * g.kernel_h * g.kernel_w;
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * macs, benchmark::Counter::kIsIterationInvariantRate,
                         benchmark::Counter::kIs1000);
}

// args: channels, spatial extent, kernel, stride
template <bool Parallel>
void BM_Forward(benchmark::State& state) {
  auto cs = make_case(state.range(0), state.range(1), state.range(2), state.range(3));
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_forward(cs.g, cs.in.data(), cs.w.data(), cs.b.data(), cs.out.data());
    else
      k::reference::conv2d_forward(cs.g, cs.in.data(), cs.w.data(), cs.b.data(), cs.out.data());
    benchmark::DoNotOptimize(cs.out.data());
  }
  set_flops(state, cs.g);
}

template <bool Parallel>
void BM_BackwardInput(benchmark::State& state) {
  auto cs = make_case(state.range(0), state.range(1), state.range(2), state.range(3));
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_backward_input(cs.g, cs.gout.data(), cs.w.data(), cs.gin.data());
    else
      k::reference::conv2d_backward_input(cs.g, cs.gout.data(), cs.w.data(), cs.gin.data());
    benchmark::DoNotOptimize(cs.gin.data());
  }
  set_flops(state, cs.g);
}

template <bool Parallel>
void BM_BackwardWeight(benchmark::State& state) {
  auto cs = make_case(state.range(0), state.range(1), state.range(2), state.range(3));
  for (auto _ : state) {
    if constexpr (Parallel)
      k::conv2d_backward_weight(cs.g, cs.gout.data(), cs.in.data(), cs.gw.data(), cs.gb.data());
    else
      k::reference::conv2d_backward_weight(cs.g, cs.gout.data(), cs.in.data(), cs.gw.data(),
                                           cs.gb.data());
    benchmark::DoNotOptimize(cs.gw.data());
  }
  set_flops(state, cs.g);
}

void shapes(benchmark::internal::Benchmark* b) {
  b->Args({8, 128, 3, 1})->Args({32, 64, 3, 1})->Args({16, 128, 4, 2})->Args({64, 32, 1, 1});
  b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(BM_Forward<false>)->Name("forward/reference")->Apply(shapes);
BENCHMARK(BM_Forward<true>)->Name("forward/parallel")->Apply(shapes);
BENCHMARK(BM_BackwardInput<false>)->Name("backward_input/reference")->Apply(shapes);
BENCHMARK(BM_BackwardInput<true>)->Name("backward_input/parallel")->Apply(shapes);
BENCHMARK(BM_BackwardWeight<false>)->Name("backward_weight/reference")->Apply(shapes);
BENCHMARK(BM_BackwardWeight<true>)->Name("backward_weight/parallel")->Apply(shapes);

BENCHMARK_MAIN();
