#include <benchmark/benchmark.h>

#include <random>

#include "syllabion/neural.hpp"
#include "syllabion/trainer.hpp"

namespace {

syllabion::Matrix inputs(std::size_t frames, std::size_t dim) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  syllabion::Matrix m(frames, dim);
  for (double& v : m.data()) v = g(rng);
  return m;
}

const syllabion::EncoderConfig kSmall{40, 4, 128, 4, 512, 1, false};

void BM_EncoderForward(benchmark::State& state) {
  std::mt19937_64 rng(5);
  syllabion::ParamStore p;
  const auto enc = syllabion::Encoder::create(p, "encoder", kSmall, rng);
  const auto x = inputs(static_cast<std::size_t>(state.range(0)), kSmall.input_dim);
  for (auto _ : state) benchmark::DoNotOptimize(enc.forward(p, x));
}
BENCHMARK(BM_EncoderForward)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_EncoderForwardBackward(benchmark::State& state) {
  std::mt19937_64 rng(6);
  syllabion::ParamStore p;
  const auto enc = syllabion::Encoder::create(p, "encoder", kSmall, rng);
  const auto x = inputs(static_cast<std::size_t>(state.range(0)), kSmall.input_dim);
  std::vector<syllabion::Matrix> grads(kSmall.n_layers + 1);
  grads.back() = inputs(x.rows(), kSmall.d_model);
  for (auto _ : state) {
    syllabion::Grads g(p);
    const auto cache = enc.forward(p, x);
    benchmark::DoNotOptimize(enc.backward(p, cache, grads, &g));
  }
}
BENCHMARK(BM_EncoderForwardBackward)->Arg(50)->Arg(200)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  syllabion::ByolConfig cfg;
  cfg.projector = {256, 64};
  cfg.predictor = {256, 64};
  auto s = syllabion::init_train_state(kSmall, cfg, 1'000'000);
  std::vector<syllabion::TrainPair> batch;
  for (int i = 0; i < 4; ++i) batch.push_back({inputs(100, 40), inputs(100, 40)});
  for (auto _ : state) benchmark::DoNotOptimize(syllabion::train_step(s, batch));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
