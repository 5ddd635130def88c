#include <benchmark/benchmark.h>

#include "vertune/metrics.hpp"

#include <random>

using namespace vertune;

namespace {

ConfusionMatrix sample_matrix(std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> count(0, 100);
    ConfusionMatrix cm;
    for (Emotion a : all_emotions()) {
        for (Emotion b : all_emotions()) {
            int n = count(rng);
            for (int i = 0; i < n; ++i) cm.add_target(a, b);
        }
        int nt = count(rng) / 10;
        for (int i = 0; i < nt; ++i) cm.add_non_target(a);
    }
    return cm;
}

} // namespace

static void BM_Ecc(benchmark::State& state) {
    EmotionWheel wheel = EmotionWheel::standard();
    ConfusionMatrix cm = sample_matrix(7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(ecc(cm, wheel));
    }
}
BENCHMARK(BM_Ecc);

static void BM_Emc(benchmark::State& state) {
    EmotionWheel wheel = EmotionWheel::standard();
    ConfusionMatrix cm = sample_matrix(11);
    for (auto _ : state) {
        benchmark::DoNotOptimize(emc(cm, wheel));
    }
}
BENCHMARK(BM_Emc);

static void BM_ParseLabel(benchmark::State& state) {
    std::vector<Emotion> labels(all_emotions().begin(), all_emotions().end());
    std::string text =
        "Looking at the composition and lighting, the scene mostly conveys contentment with a "
        "hint of awe in the background.";
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse_label(text, labels));
    }
}
BENCHMARK(BM_ParseLabel);

BENCHMARK_MAIN();
