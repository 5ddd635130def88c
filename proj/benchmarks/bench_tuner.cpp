#include <benchmark/benchmark.h>

#include "vertune/simkit.hpp"
#include "vertune/tuner.hpp"

using namespace vertune;

// One small but complete search: restarts, resets, refinements, scoring.
static void BM_TuningRun(benchmark::State& state) {
    std::vector<Emotion> labels(all_emotions().begin(), all_emotions().end());
    simkit::UserProfile profile = simkit::UserProfile::derive("u01", 42, 0.05);
    auto train = simkit::make_synthetic_dataset(profile, 24);

    TuningConfig config;
    config.n_initial = 3;
    config.t_modified = 2;
    config.k_select = 2;
    config.i1 = static_cast<int>(state.range(0));
    config.i2 = 1;
    config.i3 = 1;

    std::uint64_t seed = 0;
    for (auto _ : state) {
        config.seed = seed++;
        simkit::MockTextGen llm(config.seed);
        simkit::MockVisionClassify mllm(profile);
        TuningContext ctx;
        ctx.llm = &llm;
        ctx.mllm = &mllm;
        benchmark::DoNotOptimize(run_tuning(config, train, labels, ctx));
    }
}
BENCHMARK(BM_TuningRun)->Arg(2)->Arg(8);
