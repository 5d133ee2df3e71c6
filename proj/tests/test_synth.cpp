#include <doctest.h>

#include "voltscope/aes_model.hpp"
#include "voltscope/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

using namespace voltscope;

namespace {

SynthPlan small_plan(std::size_t n_islands, std::size_t n_supplies,
                     std::vector<double> levels, std::size_t traces,
                     std::uint64_t seed) {
    SynthPlan plan;
    plan.island_config = IslandConfig::make(n_islands, n_supplies, levels);
    plan.n_traces = traces;
    plan.rng_seed = seed;
    for (int i = 0; i < 16; ++i)
        plan.signal_key[i] = static_cast<std::uint8_t>(i);
    return plan;
}

} // namespace

TEST_CASE("gate delay model: frozen values and domain") {
    const auto cfg = IslandConfig::make(1, 1, {0.6, 1.0});
    CHECK(sn_delay(1.0, cfg) ==
          doctest::Approx(2.0408163265306127).epsilon(1e-12));
    CHECK(sn_delay(0.6, cfg) ==
          doctest::Approx(6.666666666666667).epsilon(1e-12));
    CHECK(time_scale_factor(0.6, cfg) ==
          doctest::Approx(3.266666666666666).epsilon(1e-12));
    CHECK(time_scale_factor(1.0, cfg) == 1.0);
    CHECK_THROWS_AS(sn_delay(0.3, cfg), std::domain_error);
    CHECK_THROWS_AS(sn_delay(0.1, cfg), std::domain_error);
}

TEST_CASE("time scaling stretches by the factor, identity at 1") {
    const std::vector<float> ramp{0.0f, 1.0f};
    CHECK(time_scale(ramp, 1.0) == ramp);

    const auto doubled = time_scale(ramp, 2.0);
    REQUIRE(doubled.size() == 4);
    CHECK(doubled[0] == doctest::Approx(0.0));
    CHECK(doubled[1] == doctest::Approx(1.0 / 3.0));
    CHECK(doubled[2] == doctest::Approx(2.0 / 3.0));
    CHECK(doubled[3] == doctest::Approx(1.0));
}

TEST_CASE("resampling maps endpoints to endpoints") {
    const std::vector<float> v{3.0f, -1.0f, 2.0f, 5.0f, 0.5f};
    for (std::size_t n_out : {2, 3, 7, 12}) {
        const auto out = resample_to_length(v, n_out);
        REQUIRE(out.size() == n_out);
        CHECK(out.front() == v.front());
        CHECK(out.back() == v.back());
    }
    CHECK(resample_to_length(v, 5) == v);
}

TEST_CASE("amplitude scaling") {
    std::vector<float> v{1.0f, -2.0f, 0.5f};
    CHECK(amplitude_scale(v, 1.0, 2.0) == v);
    const auto scaled = amplitude_scale(v, 0.8, 2.0);
    for (std::size_t i = 0; i < v.size(); ++i)
        CHECK(scaled[i] == doctest::Approx(v[i] * 0.64).epsilon(1e-6));
}

TEST_CASE("base trace peaks at the modeled power, noiseless rng untouched") {
    PulseModel pulse;
    pulse.pulse_width = 32;
    Block16 pt{}, key{};
    Rng rng(9, Stream::Noise, 0);
    Rng untouched(9, Stream::Noise, 0);

    const Trace t = generate_base_trace(pt, key, pulse, rng);
    CHECK(t.samples.size() == 64);
    const float peak = *std::max_element(t.samples.begin(), t.samples.end());
    CHECK(peak == doctest::Approx(64.0));
    CHECK(rng.next() == untouched.next());

    pulse.noise_sigma = 0.5;
    Rng rng2(9, Stream::Noise, 0);
    Rng untouched2(9, Stream::Noise, 0);
    (void)generate_base_trace(pt, key, pulse, rng2);
    CHECK(rng2.next() != untouched2.next());
}

TEST_CASE("single island at the top level composes to the base trace") {
    auto plan = small_plan(1, 1, {1.0}, 8, 3);
    ComposeParts parts;
    const TraceSet set = synth_pipeline(plan, &parts);
    REQUIRE(set.size() == 8);

    // Factor and gain are both exactly 1, so the composed trace equals the
    // base encryption trace sample for sample.
    for (std::size_t i = 0; i < set.size(); ++i) {
        Rng pt_rng(plan.rng_seed, Stream::Plaintexts, i);
        Block16 pt;
        for (auto &b : pt)
            b = pt_rng.byte();
        PulseModel pulse;
        Rng noise_rng(plan.rng_seed, Stream::Noise, i);
        const Trace base =
            generate_base_trace(pt, plan.signal_key, pulse, noise_rng);
        REQUIRE(set.trace(i).samples.size() == base.samples.size());
        CHECK(set.trace(i).samples == base.samples);
        CHECK(set.trace(i).plaintext == pt);
    }
    CHECK(parts.signal.size() == 8);
    CHECK(parts.noise.size() == 8);
}

TEST_CASE("pinned top-level voltages make composition a plain sum") {
    auto plan = small_plan(2, 2, {0.7, 1.0}, 6, 11);
    plan.pinned_voltages = {1.0, 1.0};
    ComposeParts parts;
    const TraceSet set = synth_pipeline(plan, &parts);

    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto &sum = set.trace(i).samples;
        const auto &sig = parts.signal[i];
        const auto &noi = parts.noise[i];
        REQUIRE(sig.size() == sum.size());
        REQUIRE(noi.size() == sum.size());
        for (std::size_t s = 0; s < sum.size(); ++s)
            CHECK(sum[s] == doctest::Approx(sig[s] + noi[s]).epsilon(1e-6));
        CHECK(set.trace(i).island_voltages ==
              std::vector<float>{1.0f, 1.0f});
    }
}

TEST_CASE("voltage draws are uniform over the level set") {
    auto plan = small_plan(1, 1, {0.6, 0.7, 0.8, 0.9, 1.0}, 2000, 17);
    const TraceSet set = synth_pipeline(plan);

    std::vector<int> counts(5, 0);
    for (const auto &t : set.traces()) {
        const double v = t.island_voltages[0];
        bool found = false;
        for (std::size_t l = 0; l < 5; ++l) {
            if (std::abs(v - plan.island_config.voltage_levels[l]) < 1e-6) {
                ++counts[l];
                found = true;
            }
        }
        CHECK(found);
    }
    // Chi-square against uniform, 4 degrees of freedom; 18.47 is the 0.1%
    // point, so a sound generator virtually never trips this.
    double chi2 = 0.0;
    for (int c : counts)
        chi2 += (c - 400.0) * (c - 400.0) / 400.0;
    CHECK(chi2 < 18.47);
}

TEST_CASE("synthesis is deterministic in the seed") {
    auto plan = small_plan(3, 2, {0.6, 0.8, 1.0}, 50, 23);
    plan.pulse.noise_sigma = 0.3;
    const TraceSet a = synth_pipeline(plan);
    const TraceSet b = synth_pipeline(plan);
    CHECK(a.payload_equals(b));

    plan.rng_seed = 24;
    const TraceSet c = synth_pipeline(plan);
    CHECK_FALSE(a.payload_equals(c));
}

TEST_CASE("per-batch voltage policy holds draws constant within a batch") {
    auto plan = small_plan(2, 2, {0.6, 0.7, 0.8, 0.9, 1.0}, 32, 5);
    plan.voltage_policy = VoltagePolicy::PerBatch;
    plan.batch_len = 4;
    const TraceSet set = synth_pipeline(plan);

    for (std::size_t b = 0; b < set.size(); b += 4) {
        for (std::size_t i = b + 1; i < b + 4; ++i)
            CHECK(set.trace(i).island_voltages ==
                  set.trace(b).island_voltages);
    }
}

TEST_CASE("unstable clock corruption") {
    std::vector<float> smooth(256);
    for (std::size_t i = 0; i < smooth.size(); ++i)
        smooth[i] = std::sin(0.05 * static_cast<double>(i));

    Rng rng(1, Stream::ClockJitter, 0);
    CHECK(corrupt_unstable_clock(smooth, 0.0, rng) == smooth);

    const double jitter = 0.1;
    auto out = corrupt_unstable_clock(smooth, jitter, rng);
    CHECK(out.size() >= smooth.size() * (1.0 - jitter) - 8);
    CHECK(out.size() <= smooth.size() * (1.0 + jitter) + 8);
    CHECK(out != smooth);

    CHECK_THROWS_AS(corrupt_unstable_clock(smooth, -0.1, rng),
                    std::invalid_argument);
    CHECK_THROWS_AS(corrupt_unstable_clock(smooth, 1.0, rng),
                    std::invalid_argument);
}

TEST_CASE("roi selection finds the variance-dense window") {
    // Variance lives where the pulse sits; the baseline tail is constant.
    auto plan = small_plan(1, 1, {1.0}, 64, 41);
    const TraceSet set = synth_pipeline(plan);
    const std::size_t start = roi_start(set, 32);
    // The pulse occupies [16, 48) of the 64-sample trace.
    CHECK(start >= 10);
    CHECK(start <= 22);

    const TraceSet roi = extract_roi(set, 32);
    CHECK(roi.n_samples() == 32);
    CHECK(roi.size() == set.size());
    for (std::size_t i = 0; i < set.size(); ++i)
        CHECK(roi.trace(i).samples ==
              std::vector<float>(set.trace(i).samples.begin() + start,
                                 set.trace(i).samples.begin() + start + 32));
}

TEST_CASE("plan validation rejects malformed inputs") {
    auto plan = small_plan(2, 2, {0.6, 1.0}, 10, 1);
    plan.pulse.pulse_width = 1;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);

    plan = small_plan(2, 2, {0.6, 1.0}, 10, 1);
    plan.pulse.noise_sigma = -0.5;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);

    plan = small_plan(2, 2, {0.6, 1.0}, 10, 1);
    plan.pinned_voltages = {1.0};
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);

    plan = small_plan(2, 2, {0.6, 1.0}, 10, 1);
    plan.pinned_voltages = {0.75, 1.0};
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);

    plan = small_plan(2, 2, {0.6, 1.0}, 10, 1);
    plan.voltage_policy = VoltagePolicy::PerBatch;
    plan.batch_len = 0;
    CHECK_THROWS_AS(plan.validate(), std::invalid_argument);
}
