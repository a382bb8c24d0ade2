#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "audiomod/audiofe.hpp"
#include "audiomod/model.hpp"
#include "audiomod/ops.hpp"
#include "audiomod/parallel.hpp"

using namespace audiomod;

namespace {

nn::Tensor<float> noise(nn::Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  std::vector<float> v(nn::shape_numel(shape));
  for (auto& x : v) x = d(rng);
  return nn::Tensor<float>(std::move(shape), std::move(v));
}

void BM_Conv2d3x3(benchmark::State& state) {
  const int c = static_cast<int>(state.range(0));
  const auto x = noise({4, c, 64, 40}, 1);
  const auto w = noise({c, c, 3, 3}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d<float>(x, w, nullptr, {1, 1}));
  state.SetItemsProcessed(state.iterations() * 4);
}
BENCHMARK(BM_Conv2d3x3)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_LogFbank(benchmark::State& state) {
  const audiofe::FbankConfig cfg;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  audiofe::Waveform w{std::vector<double>(static_cast<std::size_t>(state.range(0)) * 16000), 16000};
  for (auto& s : w.samples) s = u(rng);
  for (auto _ : state) benchmark::DoNotOptimize(audiofe::log_fbank(w, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_LogFbank)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_MicroForward(benchmark::State& state) {
  model::ModelConfig cfg;
  cfg.arch = model::Arch::kMicro;
  cfg.attention.variant = static_cast<attention::AttentionVariant>(state.range(0));
  model::Model<float> m(cfg, 0);
  const int n = 8, frames = 500;
  const auto x = noise({n, 1, frames, cfg.n_mels}, 4);
  const std::vector<int> valid(n, frames);
  for (auto _ : state) benchmark::DoNotOptimize(m.forward_classify(x, valid, nn::Mode::kEval));
  state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_MicroForward)
    ->ArgName("attention")
    ->Arg(static_cast<int>(attention::AttentionVariant::kNone))
    ->Arg(static_cast<int>(attention::AttentionVariant::kCa))
    ->Unit(benchmark::kMillisecond);

}  // namespace

int main(int argc, char** argv) {
  audiomod::tune_allocator();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
