// Serial reference vs OpenMP for the hot paths: GEMM, log-mel, scoring.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "../tests/support/fixtures.hpp"
#include "mpa/dsp/audio.hpp"
#include "mpa/nn/kernels.hpp"
#include "mpa/score/scorer.hpp"

using namespace mpa;

namespace {

Exec exec_of(const benchmark::State& s) { return s.range(0) ? Exec::Parallel : Exec::Serial; }

void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(1));
  std::mt19937 rng(1);
  std::normal_distribution<float> g;
  std::vector<float> a(n * n), b(n * n), c(n * n);
  for (auto& v : a) v = g(rng);
  for (auto& v : b) v = g(rng);
  const nn::kernels::Gemm shape{false, true, n, n, n, false};
  for (auto _ : state) {
    nn::kernels::gemm(exec_of(state), shape, a.data(), b.data(), c.data());
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * std::int64_t(n * n * n));
}
BENCHMARK(BM_Gemm)->ArgsProduct({{0, 1}, {64, 256}});

void BM_LogMel(benchmark::State& state) {
  dsp::Waveform w;
  w.samples.resize(16000 * 5);
  std::mt19937 rng(2);
  std::normal_distribution<float> g(0.0f, 0.1f);
  for (auto& v : w.samples) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(dsp::log_mel_spectrogram(w, exec_of(state)));
}
BENCHMARK(BM_LogMel)->Arg(0)->Arg(1);

void BM_ScoreUtterance(benchmark::State& state) {
  const auto vocab = testing::tone_vocab();
  const model::MpaModel m(model::ModelConfig::toy(vocab.size()), 3);
  const auto ex = testing::to_examples(io::synth::clean_split("b", 1, 4));
  for (auto _ : state)
    benchmark::DoNotOptimize(score::score_utterance(m, ex[0].features, ex[0].tokens, 2.0, "", exec_of(state)));
}
BENCHMARK(BM_ScoreUtterance)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
