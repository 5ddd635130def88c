#include <benchmark/benchmark.h>

#include "vertune/simkit.hpp"
#include "vertune/tuner.hpp"

using namespace vertune;

static void BM_MockClassify(benchmark::State& state) {
    simkit::UserProfile profile = simkit::UserProfile::derive("u01", 42, 0.05);
    simkit::MockVisionClassify mllm(profile);
    std::string prompt = simkit::synthesize_prompt(profile.preferred_features(), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mllm.classify("sim/u01/fear/0001", prompt, {}));
    }
}
BENCHMARK(BM_MockClassify);

static void BM_FeatureExtraction(benchmark::State& state) {
    simkit::UserProfile profile = simkit::UserProfile::derive("u01", 42, 0.05);
    std::string prompt = simkit::synthesize_prompt(profile.preferred_features(), 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(simkit::extract_features(prompt));
    }
}
BENCHMARK(BM_FeatureExtraction);

static void BM_MockInitialGeneration(benchmark::State& state) {
    std::vector<Emotion> labels(all_emotions().begin(), all_emotions().end());
    std::string instruction = render_init_template(6, labels);
    simkit::MockTextGen llm(7);
    DecodeParams decode;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        decode.seed = seed++;
        benchmark::DoNotOptimize(llm.generate(instruction, decode));
    }
}
BENCHMARK(BM_MockInitialGeneration);
