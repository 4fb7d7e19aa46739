#include <benchmark/benchmark.h>

#include "pfdrive/nn/convlstm.hpp"
#include "pfdrive/nn/layers.hpp"
#include "pfdrive/nn/resample.hpp"
#include "pfdrive/nn/rng.hpp"

using namespace pfd::nn;

namespace {

FeatureGrid random_grid(int h, int w, int c, uint64_t seed) {
  Rng rng(seed);
  FeatureGrid g(h, w, c);
  for (double& v : g.values) v = rng.uniform(-1.0, 1.0);
  return g;
}

void BM_ConvForward(benchmark::State& state) {
  Rng rng(0);
  Conv2d conv(Conv2dSpec{11, 11, 4, 4, 3, 16}, false, rng);
  FeatureGrid x = random_grid(72, 128, 3, 1);
  for (auto _ : state) {
    FeatureGrid y = conv.forward(x, eval_pass());
    benchmark::DoNotOptimize(y.values.data());
  }
}
BENCHMARK(BM_ConvForward);

void BM_ConvBackward(benchmark::State& state) {
  Rng rng(0);
  Conv2d conv(Conv2dSpec{5, 5, 2, 2, 16, 32}, true, rng);
  FeatureGrid x = random_grid(16, 30, 16, 2);
  Pass p{true, &rng};
  FeatureGrid y = conv.forward(x, p);
  FeatureGrid dy(y.height, y.width, y.channels);
  dy.fill(1.0);
  for (auto _ : state) {
    state.PauseTiming();
    conv.clear_cache();
    conv.forward(x, p);
    state.ResumeTiming();
    FeatureGrid dx = conv.backward(dy);
    benchmark::DoNotOptimize(dx.values.data());
  }
}
BENCHMARK(BM_ConvBackward);

void BM_ConvLstmStep(benchmark::State& state) {
  Rng rng(0);
  ConvLstmCell cell(9, 16, 16, 8, 3, false, rng);
  ConvLstmState st = cell.initial_state(0);
  FeatureGrid x = random_grid(9, 16, 16, 3);
  for (auto _ : state) {
    FeatureGrid h = cell.step(x, st, eval_pass());
    benchmark::DoNotOptimize(h.values.data());
  }
}
BENCHMARK(BM_ConvLstmStep);

void BM_ResampleDown(benchmark::State& state) {
  FeatureGrid x = random_grid(720, 1280, 3, 4);
  for (auto _ : state) {
    FeatureGrid y = resample_bilinear(x, 72, 128);
    benchmark::DoNotOptimize(y.values.data());
  }
}
BENCHMARK(BM_ResampleDown);

}  // namespace
