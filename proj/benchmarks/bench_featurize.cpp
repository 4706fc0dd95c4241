#include <benchmark/benchmark.h>

#include <cmath>
#include <numbers>

#include "syllabion/dsp.hpp"
#include "syllabion/featurize.hpp"

namespace {

syllabion::Waveform tone(double seconds) {
  syllabion::Waveform w;
  w.samples.resize(static_cast<std::size_t>(seconds * w.sample_rate));
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double t = static_cast<double>(i) / w.sample_rate;
    w.samples[i] = 0.3 * std::sin(2.0 * std::numbers::pi * 140.0 * t) + 0.1 * std::sin(2.0 * std::numbers::pi * 700.0 * t);
  }
  return w;
}

void BM_LogMel(benchmark::State& state) {
  const auto w = tone(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::log_mel(w, {}));
}
BENCHMARK(BM_LogMel)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_PerturbSpeaker(benchmark::State& state) {
  const auto w = tone(static_cast<double>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::perturb_speaker(w, 1));
}
BENCHMARK(BM_PerturbSpeaker)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

}  // namespace
