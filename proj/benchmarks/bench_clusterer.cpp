#include <benchmark/benchmark.h>

#include <random>

#include "syllabion/clusterer.hpp"

namespace {

syllabion::Matrix points(std::size_t n, std::size_t dim) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  syllabion::Matrix m(n, dim);
  for (double& v : m.data()) v = g(rng);
  return m;
}

void BM_KMeans(benchmark::State& state) {
  const auto x = points(4000, 32);
  syllabion::KMeansConfig cfg{static_cast<std::size_t>(state.range(0)), 0};
  cfg.max_iter = 20;
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::kmeans(x, cfg));
}
BENCHMARK(BM_KMeans)->Arg(16)->Arg(64)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Agglomerate(benchmark::State& state) {
  const auto c = points(static_cast<std::size_t>(state.range(0)), 32);
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::agglomerate(c, c.rows() / 4));
}
BENCHMARK(BM_Agglomerate)->Arg(128)->Arg(512)->Unit(benchmark::kMillisecond);

void BM_NearestCenters(benchmark::State& state) {
  const auto x = points(2000, 64), c = points(static_cast<std::size_t>(state.range(0)), 64);
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::nearest_centers(x, c));
}
BENCHMARK(BM_NearestCenters)->Arg(256)->Arg(1024)->Unit(benchmark::kMillisecond);

}  // namespace
