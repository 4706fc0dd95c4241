#include <benchmark/benchmark.h>

#include <random>

#include "syllabion/segmenter.hpp"

namespace {

syllabion::Matrix random_features(std::size_t frames, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  syllabion::Matrix m(frames, dim);
  for (double& v : m.data()) v = g(rng);
  return m;
}

// Min-cut DP cost over T frames at 0.2 s per syllable (S = T / 10 at 50 Hz).
void BM_MincutSegment(benchmark::State& state) {
  const auto t = static_cast<std::size_t>(state.range(0));
  const auto w = syllabion::self_similarity(random_features(t, 64, 1)).weights;
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::mincut_segment(w, t / 10));
}
BENCHMARK(BM_MincutSegment)->RangeMultiplier(2)->Range(100, 800)->Unit(benchmark::kMillisecond);

void BM_SegmentFeatures(benchmark::State& state) {
  const auto x = random_features(static_cast<std::size_t>(state.range(0)), 768, 2);
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::segment_features(x, 50.0, {}));
}
BENCHMARK(BM_SegmentFeatures)->Arg(250)->Arg(500)->Unit(benchmark::kMillisecond);

}  // namespace
