// Side-by-side timings of the hot kernels: the straightforward serial
// reference against the production (bucketed / OpenMP) implementation.
// Inputs are built once per pair and shared between the two sides.

#include <benchmark/benchmark.h>

#include "voltscope/cluster.hpp"
#include "voltscope/cpa.hpp"
#include "voltscope/metrics.hpp"
#include "voltscope/rng.hpp"
#include "voltscope/serial_ref.hpp"
#include "voltscope/synth.hpp"

#include <vector>

using namespace voltscope;

namespace {

const std::vector<double> &long_vector(int which) {
    static const auto make = [](std::uint64_t idx) {
        Rng rng(42, Stream::Bootstrap, idx);
        std::vector<double> v(1 << 18);
        for (auto &x : v)
            x = rng.uniform() + (idx ? 0.25 * v.size() : 0.0);
        return v;
    };
    static const std::vector<double> a = make(0);
    static const std::vector<double> b = make(1);
    return which == 0 ? a : b;
}

const TraceSet &attack_set() {
    static const TraceSet set = [] {
        SynthPlan plan;
        plan.island_config = IslandConfig::make(1, 1, {1.0});
        plan.n_traces = 2000;
        plan.rng_seed = 4242;
        for (int i = 0; i < 16; ++i)
            plan.signal_key[i] = static_cast<std::uint8_t>(13 * i + 7);
        plan.pulse.noise_sigma = 1.0;
        return synth_pipeline(plan);
    }();
    return set;
}

Matrix<float> random_matrix(std::size_t rows, std::size_t cols,
                            std::uint64_t idx) {
    Rng rng(43, Stream::Bootstrap, idx);
    Matrix<float> m(rows, cols);
    for (auto &x : m.storage())
        x = static_cast<float>(rng.gaussian(1.0));
    return m;
}

const TraceSet &cluster_set() {
    static const TraceSet set = [] {
        SynthPlan plan;
        plan.island_config =
            IslandConfig::make(2, 2, {0.6, 0.7, 0.8, 0.9, 1.0});
        plan.n_traces = 2000;
        plan.rng_seed = 777;
        for (int i = 0; i < 16; ++i)
            plan.signal_key[i] = static_cast<std::uint8_t>(3 * i + 1);
        return extract_roi(synth_pipeline(plan), 64);
    }();
    return set;
}

void BM_PearsonSerial(benchmark::State &state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(
            serial::pearson(long_vector(0), long_vector(1)));
}
BENCHMARK(BM_PearsonSerial);

void BM_PearsonParallel(benchmark::State &state) {
    for (auto _ : state)
        benchmark::DoNotOptimize(pearson(long_vector(0), long_vector(1)));
}
BENCHMARK(BM_PearsonParallel);

void BM_CorrelationPeaksSerial(benchmark::State &state) {
    const TraceSet &set = attack_set();
    for (auto _ : state)
        benchmark::DoNotOptimize(
            serial::correlation_peaks(set, 0, LeakModel::HammingWeight));
}
BENCHMARK(BM_CorrelationPeaksSerial);

void BM_CorrelationPeaksBucketed(benchmark::State &state) {
    const TraceSet &set = attack_set();
    for (auto _ : state) {
        const AttackResult res =
            cpa_attack(set, 0, LeakModel::HammingWeight, std::nullopt);
        benchmark::DoNotOptimize(res.peak_correlation.data());
    }
}
BENCHMARK(BM_CorrelationPeaksBucketed);

void BM_WelchSerial(benchmark::State &state) {
    static const Matrix<float> a = random_matrix(400, 256, 0);
    static const Matrix<float> b = random_matrix(400, 256, 1);
    for (auto _ : state)
        benchmark::DoNotOptimize(serial::welch_t(a, b));
}
BENCHMARK(BM_WelchSerial);

void BM_WelchParallel(benchmark::State &state) {
    static const Matrix<float> a = random_matrix(400, 256, 0);
    static const Matrix<float> b = random_matrix(400, 256, 1);
    for (auto _ : state)
        benchmark::DoNotOptimize(welch_t(a, b));
}
BENCHMARK(BM_WelchParallel);

// One nearest-centroid pass over all traces.
void BM_KmeansAssignSerial(benchmark::State &state) {
    const TraceSet &set = cluster_set();
    static const ClusterModel cm = kmeans(set, 8, 99);
    static const Matrix<float> data = set.sample_matrix();
    for (auto _ : state)
        benchmark::DoNotOptimize(serial::kmeans_assign(data, cm.centroids));
}
BENCHMARK(BM_KmeansAssignSerial);

// Full production clustering, capped at two Lloyd iterations.
void BM_KmeansTwoItersParallel(benchmark::State &state) {
    const TraceSet &set = cluster_set();
    for (auto _ : state) {
        const ClusterModel cm = kmeans(set, 8, 99, 2);
        benchmark::DoNotOptimize(cm.assignment.data());
    }
}
BENCHMARK(BM_KmeansTwoItersParallel);

} // namespace

BENCHMARK_MAIN();
