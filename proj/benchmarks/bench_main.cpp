#include <benchmark/benchmark.h>

#include <sstream>
#include <vector>

#include "ecdd/calibration.hpp"
#include "ecdd/classifiers.hpp"
#include "ecdd/detector.hpp"
#include "ecdd/random.hpp"
#include "ecdd/streams.hpp"
#ifdef ECDD_HAVE_CLI
#include "ecdd/cli/commands.hpp"
#endif

using namespace ecdd;

namespace {

std::vector<int> error_bits(std::size_t n, double p, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<int> bits(n);
    for (auto& b : bits) b = bernoulli(rng, p);
    return bits;
}

DetectorConfig config(double arl0) {
    DetectorConfig c;
    c.target_arl0 = arl0;
    return c;
}

}  // namespace

static void BM_ChartStep(benchmark::State& state) {
    const auto table = CalibrationTable::paper();
    const auto bits = error_bits(1 << 16, 0.1, 1);
    EwmaChart chart(config(1000), table);
    std::size_t i = 0;
    for (auto _ : state) {
        if (chart.step(bits[i++ & 0xffff]) == Status::Drift) chart.reset();
        benchmark::DoNotOptimize(chart.state().z);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ChartStep);

static void BM_DetectorStepWithPayload(benchmark::State& state) {
    const auto table = CalibrationTable::paper();
    const auto bits = error_bits(1 << 16, 0.1, 2);
    Detector<LabeledSample> detector(config(1000), table);
    const LabeledSample sample{{0.5, 0.25}, 1};
    std::size_t i = 0;
    for (auto _ : state) {
        if (detector.step(bits[i++ & 0xffff], sample) == Status::Drift) detector.reset();
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_DetectorStepWithPayload);

#ifdef ECDD_HAVE_CLI
static void BM_MonitorLoop(benchmark::State& state) {
    const auto table = CalibrationTable::paper();
    std::string input;
    for (int b : error_bits(static_cast<std::size_t>(state.range(0)), 0.1, 3)) {
        input.push_back(static_cast<char>('0' + b));
        input.push_back('\n');
    }
    cli::MonitorOptions options;
    options.detector.target_arl0 = 1000;
    for (auto _ : state) {
        std::istringstream in(input);
        std::ostringstream out;
        benchmark::DoNotOptimize(cli::run_monitor(table, options, in, out));
    }
    state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MonitorLoop)->Arg(100000)->Unit(benchmark::kMillisecond);
#endif

static void BM_EstimateArl0(benchmark::State& state) {
    for (auto _ : state) benchmark::DoNotOptimize(estimate_arl0(0.1, 0.2, 2.6, 1000, 100000, 1).mean);
}
BENCHMARK(BM_EstimateArl0)->Unit(benchmark::kMillisecond);

static void BM_SearchLimit(benchmark::State& state) {
    LimitSearchOptions options;
    options.reps = static_cast<long>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(search_limit(0.1, 0.2, 400, options).limit);
}
BENCHMARK(BM_SearchLimit)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

static void BM_LdaUpdatePredict(benchmark::State& state) {
    StreamSpec spec;
    spec.generator = GaussGenerator{};
    spec.length = 4096;
    SyntheticStream stream(spec);
    const auto samples = collect(stream);
    StreamingLda lda;
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& s = samples[i++ & 4095];
        if (lda.trained()) benchmark::DoNotOptimize(lda.predict(s.features));
        lda.update(s);
    }
    state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_LdaUpdatePredict);

static void BM_KnnPredict(benchmark::State& state) {
    StreamSpec spec;
    spec.generator = SineGenerator{};
    spec.length = state.range(0) + 1;
    SyntheticStream stream(spec);
    auto samples = collect(stream);
    HistoryKnn knn(3);
    for (std::size_t i = 1; i < samples.size(); ++i) knn.update(samples[i]);
    for (auto _ : state) benchmark::DoNotOptimize(knn.predict(samples[0].features));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KnnPredict)->Range(64, 4096)->Complexity(benchmark::oN);

static void BM_GaussStream(benchmark::State& state) {
    StreamSpec spec;
    spec.generator = GaussGenerator{};
    spec.length = 400;
    for (auto _ : state) {
        SyntheticStream stream(spec);
        while (auto s = stream.next()) benchmark::DoNotOptimize(s->label);
    }
    state.SetItemsProcessed(state.iterations() * 400);
}
BENCHMARK(BM_GaussStream);

BENCHMARK_MAIN();
