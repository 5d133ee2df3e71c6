#include <doctest.h>

#include "voltscope/cluster.hpp"
#include "voltscope/parallel.hpp"
#include "voltscope/rng.hpp"
#include "voltscope/serial_ref.hpp"
#include "voltscope/synth.hpp"

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

using namespace voltscope;

namespace {

Trace point_trace(std::vector<float> samples, Rng &rng) {
    Trace t;
    t.samples = std::move(samples);
    for (auto &b : t.plaintext)
        b = rng.byte();
    t.island_voltages = {1.0f};
    return t;
}

// Three well-separated blobs of 2d points, jitter well below the spacing.
TraceSet three_blob_set(int per_blob, std::uint64_t seed) {
    Rng rng(seed, Stream::Bootstrap, 0);
    const float centers[3][2] = {{0.0f, 0.0f}, {10.0f, 0.0f}, {0.0f, 10.0f}};
    std::vector<Trace> traces;
    for (int b = 0; b < 3; ++b)
        for (int i = 0; i < per_blob; ++i) {
            const float dx = static_cast<float>(rng.uniform() - 0.5);
            const float dy = static_cast<float>(rng.uniform() - 0.5);
            traces.push_back(point_trace(
                {centers[b][0] + dx, centers[b][1] + dy}, rng));
        }
    return TraceSet(traces, IslandConfig::make(1, 1, {1.0}));
}

// Multisets of size m over g symbols, counted by direct enumeration.
std::uint64_t count_multisets(std::uint64_t m, std::uint64_t g) {
    if (m == 0)
        return 1;
    if (g == 1)
        return 1;
    // Choose how many copies of the first symbol, recurse on the rest.
    std::uint64_t total = 0;
    for (std::uint64_t take = 0; take <= m; ++take)
        total += count_multisets(m - take, g - 1);
    return total;
}

TraceSet small_irdvs_set(std::size_t n_traces, std::uint64_t seed) {
    SynthPlan plan;
    plan.island_config = IslandConfig::make(2, 2, {0.6, 0.8, 1.0});
    plan.n_traces = n_traces;
    plan.rng_seed = seed;
    for (int i = 0; i < 16; ++i)
        plan.signal_key[i] = static_cast<std::uint8_t>(i * 7 + 1);
    plan.scale_time = false;
    return synth_pipeline(plan);
}

} // namespace

TEST_CASE("k-means recovers well-separated groups") {
    const TraceSet set = three_blob_set(20, 51);
    const ClusterModel cm = kmeans(set, 3, 1234);

    REQUIRE(cm.assignment.size() == set.size());
    // Every blob lands in one cluster, and the three clusters differ.
    std::set<int> blob_cluster;
    for (int b = 0; b < 3; ++b) {
        const int c0 = cm.assignment[static_cast<std::size_t>(b) * 20];
        for (int i = 0; i < 20; ++i)
            CHECK(cm.assignment[static_cast<std::size_t>(b) * 20 +
                                static_cast<std::size_t>(i)] == c0);
        blob_cluster.insert(c0);
    }
    CHECK(blob_cluster.size() == 3);
    // Jitter is uniform in [-0.5, 0.5]^2, so inertia stays far below the
    // between-blob spacing.
    CHECK(cm.inertia < 60 * 0.5);
}

TEST_CASE("one cluster per distinct point drives inertia to zero") {
    Rng rng(52, Stream::Bootstrap, 0);
    std::vector<Trace> traces;
    for (int i = 0; i < 6; ++i)
        traces.push_back(
            point_trace({static_cast<float>(3 * i), 1.0f}, rng));
    const TraceSet set(traces, IslandConfig::make(1, 1, {1.0}));
    const ClusterModel cm = kmeans(set, 6, 9);
    CHECK(cm.inertia == doctest::Approx(0.0).epsilon(1e-12));
    std::set<int> used(cm.assignment.begin(), cm.assignment.end());
    CHECK(used.size() == 6);
}

TEST_CASE("objective never increases across iterations") {
    const TraceSet set = small_irdvs_set(300, 600);
    const ClusterModel cm = kmeans(set, 9, 77);
    REQUIRE_FALSE(cm.inertia_history.empty());
    for (std::size_t i = 1; i < cm.inertia_history.size(); ++i)
        CHECK(cm.inertia_history[i] <= cm.inertia_history[i - 1] + 1e-9);
    CHECK(cm.inertia ==
          doctest::Approx(cm.inertia_history.back()).epsilon(1e-12));
}

TEST_CASE("k-means argument validation") {
    const TraceSet set = three_blob_set(4, 53);
    CHECK_THROWS_AS(kmeans(set, 0, 1), std::invalid_argument);
    CHECK_THROWS_AS(kmeans(set, static_cast<int>(set.size()) + 1, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(kmeans(set, 2, 1, 0), std::invalid_argument);

    Rng rng(54, Stream::Bootstrap, 0);
    Trace a = point_trace({1.0f, 2.0f, 3.0f}, rng);
    Trace b = point_trace({1.0f, 2.0f}, rng);
    a.batch_size = 2;
    b.batch_size = 2;
    const TraceSet ragged({a, b}, IslandConfig::make(1, 1, {1.0}));
    CHECK_THROWS_AS(kmeans(ragged, 1, 1), std::invalid_argument);
}

TEST_CASE("same seed reproduces the model bitwise") {
    const TraceSet set = small_irdvs_set(200, 601);
    const ClusterModel a = kmeans(set, 6, 42);
    const ClusterModel b = kmeans(set, 6, 42);
    CHECK(a.assignment == b.assignment);
    CHECK(a.inertia == b.inertia);
    CHECK(a.centroids == b.centroids);
}

TEST_CASE("clustering does not depend on the worker count") {
    const TraceSet set = small_irdvs_set(250, 602);
    set_worker_cap(1);
    const ClusterModel one = kmeans(set, 5, 13);
    set_worker_cap(4);
    const ClusterModel four = kmeans(set, 5, 13);
    set_worker_cap(0);

    CHECK(one.assignment == four.assignment);
    CHECK(one.inertia == four.inertia);
    CHECK(one.inertia_history == four.inertia_history);
    CHECK(one.centroids == four.centroids);
}

TEST_CASE("final assignment matches the serial nearest-centroid rule") {
    const TraceSet set = small_irdvs_set(150, 603);
    const ClusterModel cm = kmeans(set, 4, 5);
    const std::vector<int> ref =
        serial::kmeans_assign(set.sample_matrix(), cm.centroids);
    CHECK(ref == cm.assignment);
}

TEST_CASE("distinct voltage combinations count") {
    // Exhaustive enumeration cross-check over the practical grid.
    for (std::uint64_t m = 1; m <= 6; ++m)
        for (std::uint64_t g = 1; g <= 8; ++g)
            CHECK(ideal_k(m, g) == count_multisets(m, g));

    CHECK(ideal_k(1, 5) == 5);
    CHECK(ideal_k(2, 5) == 15);
    CHECK(ideal_k(3, 5) == 35);
    CHECK(ideal_k(4, 5) == 70);
    CHECK(ideal_k(6, 1) == 1);
    CHECK_THROWS_AS(ideal_k(0, 5), std::invalid_argument);
    CHECK_THROWS_AS(ideal_k(5, 0), std::invalid_argument);
    CHECK_THROWS_AS(ideal_k(64, 64), std::overflow_error);
}

TEST_CASE("a single cluster reduces to the plain attack") {
    const TraceSet set = small_irdvs_set(120, 604);
    Block16 key;
    for (int i = 0; i < 16; ++i)
        key[i] = static_cast<std::uint8_t>(i * 7 + 1);

    const FusedAttackResult fused =
        cluster_attack(set, 1, LeakModel::HammingWeight, key, 99);
    REQUIRE(fused.skipped_clusters.empty());
    REQUIRE(fused.fused_pge.has_value());
    for (int b = 0; b < 16; ++b) {
        const AttackResult plain =
            cpa_attack(set, b, LeakModel::HammingWeight, key);
        CHECK(fused.fused_ranking[b] == plain.ranking);
        CHECK((*fused.fused_pge)[b] == *plain.pge);
    }
}

TEST_CASE("degenerate clusterings are rejected") {
    Rng rng(55, Stream::Bootstrap, 0);
    std::vector<Trace> traces;
    for (int i = 0; i < 3; ++i)
        traces.push_back(point_trace({static_cast<float>(i), 0.0f}, rng));
    const TraceSet set(traces, IslandConfig::make(1, 1, {1.0}));
    // Three singleton clusters leave nothing to attack.
    CHECK_THROWS_AS(
        cluster_attack(set, 3, LeakModel::HammingWeight, std::nullopt, 1),
        std::runtime_error);
}

TEST_CASE("singleton clusters sit out and are reported") {
    // Two tight 12-trace groups plus one far outlier; with K = 3 the
    // outlier forms a singleton cluster.
    Rng rng(56, Stream::Bootstrap, 0);
    std::vector<Trace> traces;
    for (int i = 0; i < 12; ++i)
        traces.push_back(point_trace(
            {static_cast<float>(rng.uniform()), 0.0f}, rng));
    for (int i = 0; i < 12; ++i)
        traces.push_back(point_trace(
            {8.0f + static_cast<float>(rng.uniform()), 0.0f}, rng));
    traces.push_back(point_trace({1000.0f, 0.0f}, rng));
    const TraceSet set(traces, IslandConfig::make(1, 1, {1.0}));

    const FusedAttackResult fused =
        cluster_attack(set, 3, LeakModel::HammingWeight, std::nullopt, 7);
    REQUIRE(fused.skipped_clusters.size() == 1);
    const int skipped = fused.skipped_clusters[0];
    CHECK(fused.per_cluster[static_cast<std::size_t>(skipped)].empty());
    int attacked = 0;
    for (int c = 0; c < 3; ++c)
        if (!fused.per_cluster[static_cast<std::size_t>(c)].empty())
            ++attacked;
    CHECK(attacked == 2);
}

TEST_CASE("disclosure estimation requires the key") {
    const TraceSet set = small_irdvs_set(60, 605);
    CHECK_THROWS_AS(
        cluster_attack(set, 2, LeakModel::HammingWeight, std::nullopt, 1,
                       std::vector<std::size_t>{30, 60}),
        std::invalid_argument);
}

TEST_CASE("sweep rows agree with standalone attacks at the full count") {
    const TraceSet set = small_irdvs_set(160, 606);
    Block16 key;
    for (int i = 0; i < 16; ++i)
        key[i] = static_cast<std::uint8_t>(i * 7 + 1);
    const std::vector<int> ks{1, 3, 5};
    const std::vector<std::size_t> schedule{80, 160};

    const std::vector<SweepRow> rows =
        sweep_k(set, ks, LeakModel::HammingWeight, key, 21, schedule);
    REQUIRE(rows.size() == ks.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].k == ks[i]);
        CHECK(rows[i].mtd.schedule == schedule);

        // The prefix engine's final snapshot must agree with a standalone
        // fused attack over the whole set (same clustering seed).
        const FusedAttackResult full = cluster_attack(
            set, ks[i], LeakModel::HammingWeight, key, 21);
        REQUIRE(full.fused_pge.has_value());
        CHECK(rows[i].mtd.per_count_pge.back() == *full.fused_pge);
        CHECK(rows[i].avg_fused_pge ==
              doctest::Approx(avg_pge(*full.fused_pge)).epsilon(1e-12));
    }

    CHECK_THROWS_AS(sweep_k(set, {}, LeakModel::HammingWeight, key, 21,
                            schedule),
                    std::invalid_argument);
}
