#include <doctest.h>

#include "voltscope/aes_model.hpp"
#include "voltscope/cpa.hpp"
#include "voltscope/parallel.hpp"
#include "voltscope/rng.hpp"
#include "voltscope/serial_ref.hpp"
#include "voltscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

using namespace voltscope;

namespace {

Block16 test_key() {
    Block16 k;
    for (int i = 0; i < 16; ++i)
        k[i] = static_cast<std::uint8_t>(0xc3 ^ (17 * i));
    return k;
}

// Unprotected single-island set: pulse peak equals the summed model power,
// no voltage randomization in the way.
TraceSet unprotected_set(std::size_t n_traces, double noise_sigma,
                         std::uint64_t seed) {
    SynthPlan plan;
    plan.island_config = IslandConfig::make(1, 1, {1.0});
    plan.n_traces = n_traces;
    plan.rng_seed = seed;
    plan.signal_key = test_key();
    plan.pulse.noise_sigma = noise_sigma;
    return synth_pipeline(plan);
}

TraceSet prefix_of(const TraceSet &set, std::size_t n) {
    std::vector<Trace> traces(set.traces().begin(),
                              set.traces().begin() +
                                  static_cast<std::ptrdiff_t>(n));
    return TraceSet(traces, set.config());
}

} // namespace

TEST_CASE("pearson matches a hand-computed value") {
    const std::vector<double> x{1.0, 2.0, 3.0};
    const std::vector<double> y{1.0, 2.0, 4.0};
    CHECK(pearson(x, y) == doctest::Approx(0.9819805060619659).epsilon(1e-12));
    CHECK(serial::pearson(x, y) ==
          doctest::Approx(0.9819805060619659).epsilon(1e-12));
}

TEST_CASE("pearson endpoints and degenerate inputs") {
    const std::vector<double> x{1.0, 2.0, 3.0, 4.0};
    std::vector<double> y;
    for (double v : x)
        y.push_back(-2.5 * v + 7.0);
    CHECK(pearson(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pearson(x, y) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(pearson(x, {3.0, 3.0, 3.0, 3.0}) == 0.0);
    CHECK(pearson({0.0, 0.0, 0.0, 0.0}, y) == 0.0);
    CHECK_THROWS_AS(pearson({1.0, 2.0}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(pearson({1.0}, {1.0}), std::invalid_argument);
}

TEST_CASE("production and reference pearson agree on random data") {
    Rng rng(7, Stream::Bootstrap, 0);
    for (int rep = 0; rep < 50; ++rep) {
        std::vector<double> x, y;
        const std::size_t n = 2 + rng.uniform_index(40);
        for (std::size_t i = 0; i < n; ++i) {
            x.push_back(rng.uniform() * 10.0 - 5.0);
            y.push_back(rng.uniform() * 10.0 - 5.0);
        }
        CHECK(pearson(x, y) ==
              doctest::Approx(serial::pearson(x, y)).epsilon(1e-12));
    }
}

TEST_CASE("leakage values for both models") {
    // S-box input 0x00 maps to 0x63.
    CHECK(leak_value(LeakModel::HammingWeight, 0x00) == 4);
    CHECK(leak_value(LeakModel::HammingDistance, 0x00) == 4);
    // 0x53 maps to 0xed; 0xed ^ 0x53 = 0xbe.
    CHECK(leak_value(LeakModel::HammingWeight, 0x53) == 6);
    CHECK(leak_value(LeakModel::HammingDistance, 0x53) == 6);
    // 0x01 maps to 0x7c; 0x7c ^ 0x01 = 0x7d.
    CHECK(leak_value(LeakModel::HammingWeight, 0x01) == 5);
    CHECK(leak_value(LeakModel::HammingDistance, 0x01) == 6);
}

TEST_CASE("noiseless unprotected traces disclose every key byte") {
    const TraceSet set = unprotected_set(1500, 0.0, 4242);
    const Block16 key = test_key();
    for (int b = 0; b < 16; ++b) {
        const AttackResult res =
            cpa_attack(set, b, LeakModel::HammingWeight, key);
        REQUIRE(res.pge.has_value());
        CHECK(*res.pge == 0);
        CHECK(res.ranking[0] == key[b]);
        // The other fifteen bytes act as algorithmic noise, so the peak
        // sits well below 1 even without electronic noise.
        CHECK(res.peak_correlation[key[b]] > 0.15);
        CHECK(res.peak_correlation[key[b]] <= 1.0);
    }
}

TEST_CASE("attack results are invariant under affine sample transforms") {
    const TraceSet set = unprotected_set(400, 0.5, 91);
    const AttackResult base =
        cpa_attack(set, 3, LeakModel::HammingWeight, test_key());

    std::vector<Trace> scaled = set.traces();
    for (Trace &t : scaled)
        for (float &v : t.samples)
            v = 0.125f * v + 3.0f;
    const TraceSet set2(scaled, set.config());
    const AttackResult trans =
        cpa_attack(set2, 3, LeakModel::HammingWeight, test_key());

    CHECK(trans.ranking == base.ranking);
    CHECK(trans.pge == base.pge);
    // Peaks are computed in double from float samples, so the affine map
    // only preserves them to float accumulation accuracy.
    for (int g = 0; g < 256; ++g)
        CHECK(trans.peak_correlation[g] ==
              doctest::Approx(base.peak_correlation[g]).epsilon(1e-4));
}

TEST_CASE("bucketed engine matches the direct reference peaks") {
    const TraceSet set = unprotected_set(300, 1.0, 5150);
    for (LeakModel model :
         {LeakModel::HammingWeight, LeakModel::HammingDistance}) {
        const AttackResult res = cpa_attack(set, 7, model, std::nullopt);
        const std::vector<double> ref =
            serial::correlation_peaks(set, 7, model);
        REQUIRE(ref.size() == 256);
        for (int g = 0; g < 256; ++g)
            CHECK(res.peak_correlation[g] ==
                  doctest::Approx(ref[g]).epsilon(1e-10));
    }
}

TEST_CASE("constant traces produce zero peaks and an identity ranking") {
    std::vector<Trace> traces;
    Rng rng(11, Stream::Plaintexts, 0);
    for (int i = 0; i < 32; ++i) {
        Trace t;
        t.samples.assign(8, 2.5f);
        for (auto &b : t.plaintext)
            b = rng.byte();
        t.island_voltages = {1.0f};
        traces.push_back(t);
    }
    const TraceSet set(traces, IslandConfig::make(1, 1, {1.0}));
    Block16 key{};
    key[5] = 0x2a;
    const AttackResult res = cpa_attack(set, 5, LeakModel::HammingWeight, key);
    for (double p : res.peak_correlation)
        CHECK(p == 0.0);
    // All peaks tie at zero, so the ranking falls back to guess order and
    // the PGE equals the key byte value.
    std::vector<int> identity(256);
    std::iota(identity.begin(), identity.end(), 0);
    CHECK(res.ranking == identity);
    CHECK(*res.pge == 0x2a);
}

TEST_CASE("attack argument validation") {
    const TraceSet set = unprotected_set(16, 0.0, 3);
    CHECK_THROWS_AS(cpa_attack(set, -1, LeakModel::HammingWeight, std::nullopt),
                    std::invalid_argument);
    CHECK_THROWS_AS(cpa_attack(set, 16, LeakModel::HammingWeight, std::nullopt),
                    std::invalid_argument);
    CHECK_THROWS_AS(
        cpa_attack(prefix_of(set, 1), 0, LeakModel::HammingWeight,
                   std::nullopt),
        std::invalid_argument);
}

TEST_CASE("disclosure schedule validation") {
    const TraceSet set = unprotected_set(40, 0.0, 5);
    const Block16 key = test_key();
    const LeakModel hw = LeakModel::HammingWeight;
    CHECK_THROWS_AS(compute_mtd(set, hw, key, {}), std::invalid_argument);
    CHECK_THROWS_AS(compute_mtd(set, hw, key, {1, 10}), std::invalid_argument);
    CHECK_THROWS_AS(compute_mtd(set, hw, key, {10, 10}), std::invalid_argument);
    CHECK_THROWS_AS(compute_mtd(set, hw, key, {10, 5}), std::invalid_argument);
    CHECK_THROWS_AS(compute_mtd(set, hw, key, {10, 41}), std::invalid_argument);
}

TEST_CASE("incremental prefix attack agrees with from-scratch attacks") {
    const TraceSet set = unprotected_set(200, 2.0, 777);
    const Block16 key = test_key();
    const std::vector<std::size_t> schedule{50, 120, 200};
    const MtdReport mtd =
        compute_mtd(set, LeakModel::HammingWeight, key, schedule);

    REQUIRE(mtd.schedule == schedule);
    REQUIRE(mtd.per_count_pge.size() == schedule.size());
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const TraceSet prefix = prefix_of(set, schedule[i]);
        for (int b = 0; b < 16; ++b) {
            const AttackResult fresh =
                cpa_attack(prefix, b, LeakModel::HammingWeight, key);
            CHECK(mtd.per_count_pge[i][static_cast<std::size_t>(b)] ==
                  *fresh.pge);
        }
    }
}

TEST_CASE("disclosure point is the first all-zero schedule entry") {
    // Noiseless unprotected traces disclose well before 600; the first
    // schedule entry is small enough that some byte is still wrong.
    const TraceSet set = unprotected_set(600, 0.0, 12);
    const MtdReport mtd = compute_mtd(set, LeakModel::HammingWeight,
                                      test_key(), {10, 600});
    REQUIRE(mtd.disclosed_at.has_value());
    std::size_t first_zero = 0;
    for (std::size_t i = 0; i < mtd.per_count_pge.size(); ++i) {
        const auto &pges = mtd.per_count_pge[i];
        if (std::all_of(pges.begin(), pges.end(),
                        [](int p) { return p == 0; })) {
            first_zero = mtd.schedule[i];
            break;
        }
    }
    CHECK(*mtd.disclosed_at == first_zero);
    CHECK(*mtd.disclosed_at == 600);
}

TEST_CASE("default disclosure schedule clips to the trace count") {
    CHECK(default_mtd_schedule(300) == std::vector<std::size_t>{300});
    CHECK(default_mtd_schedule(2500) ==
          std::vector<std::size_t>{1000, 2000, 2500});
    CHECK(default_mtd_schedule(16000) ==
          std::vector<std::size_t>{1000, 2000, 5000, 10000, 16000});
    CHECK(default_mtd_schedule(1).empty());
}

TEST_CASE("average guessing entropy helpers") {
    std::array<int, 16> pges{};
    pges[0] = 16;
    CHECK(avg_pge(pges) == doctest::Approx(1.0));
    CHECK_THROWS_AS(avg_pge(std::vector<AttackResult>(3)),
                    std::invalid_argument);
    std::vector<AttackResult> keyless(16);
    CHECK_THROWS_AS(avg_pge(keyless), std::invalid_argument);
}

TEST_CASE("results do not depend on the worker count") {
    const TraceSet set = unprotected_set(500, 1.5, 2024);
    set_worker_cap(1);
    const AttackResult one =
        cpa_attack(set, 9, LeakModel::HammingWeight, test_key());
    set_worker_cap(3);
    const AttackResult three =
        cpa_attack(set, 9, LeakModel::HammingWeight, test_key());
    set_worker_cap(0);

    CHECK(one.ranking == three.ranking);
    CHECK(one.peak_correlation == three.peak_correlation);
    CHECK(one.correlation_trace == three.correlation_trace);
}
