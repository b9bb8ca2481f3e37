#include <random>

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "footprint/dataset.hpp"
#include "footprint/metrics.hpp"
#include "footprint/model.hpp"

namespace {

using namespace footprint;

MaskRaster random_mask(int size, std::uint32_t seed) {
  std::mt19937 rng(seed);
  MaskRaster m(size, size, 1);
  for (auto& v : m.data) v = rng() & 1u;
  return m;
}

void BM_Confusion(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  const auto a = random_mask(size, 1), b = random_mask(size, 2);
  for (auto _ : state) benchmark::DoNotOptimize(confusion(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<int64_t>(size) * size);
}
BENCHMARK(BM_Confusion)->Arg(256)->Arg(1500);

void BM_MetricsFromCounts(benchmark::State& state) {
  const ConfusionCounts c{1200, 300, 250, 63786};
  for (auto _ : state) benchmark::DoNotOptimize(metrics_from_counts(c));
}
BENCHMARK(BM_MetricsFromCounts);

void BM_Normalize(benchmark::State& state) {
  ImageRaster img(256, 256, 3);
  std::mt19937 rng(3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng());
  for (auto _ : state) benchmark::DoNotOptimize(normalize(img));
}
BENCHMARK(BM_Normalize);

void BM_Downsample(benchmark::State& state) {
  RasterSample s;
  s.image = ImageRaster(1500, 1500, 3, 90);
  s.mask = MaskRaster(1500, 1500, 1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(downsample_pair(s, 256));
}
BENCHMARK(BM_Downsample)->Unit(benchmark::kMillisecond);

void BM_ForwardB0(benchmark::State& state) {
  torch::manual_seed(0);
  SegmentationModel model(ModelConfig{});
  model->eval();
  torch::NoGradGuard ng;
  const auto x = torch::rand({1, 3, state.range(0), state.range(0)});
  for (auto _ : state) benchmark::DoNotOptimize(model->forward(x).probabilities);
}
BENCHMARK(BM_ForwardB0)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
