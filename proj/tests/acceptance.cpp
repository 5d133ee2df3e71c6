// End-to-end acceptance checks for the workbench. Each criterion prints one
// pass/fail line; the process exits nonzero if any executed criterion fails.
// Run with --only N to execute a single criterion.

#include "voltscope/aes_model.hpp"
#include "voltscope/align.hpp"
#include "voltscope/cluster.hpp"
#include "voltscope/cpa.hpp"
#include "voltscope/experiment.hpp"
#include "voltscope/metrics.hpp"
#include "voltscope/parallel.hpp"
#include "voltscope/rng.hpp"
#include "voltscope/synth.hpp"
#include "voltscope/trace_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

using namespace voltscope;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances. Analytic quantities are checked against values worked
// out independently by hand; statistical quantities get wide, seeded bands.
constexpr double kWorkedValueTol = 1e-12;
constexpr double kEmpiricalSnrRelTol = 0.10;
constexpr double kPathCostTol = 1e-12;
constexpr double kRealignMinCorrelation = 0.99;
constexpr double kRobustnessMinPge = 20.0;
constexpr double kAlignRegressionSlack = 5.0;
constexpr int kTvlaSeeds = 20;
constexpr int kTvlaMinMaskedPasses = 19;

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Outcome {
    bool ok = true;
    std::string detail;
};

std::string fmt(const char *pattern, double a, double b = 0.0,
                double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c);
    return buf;
}

const std::vector<double> kFiveLevels{0.6, 0.7, 0.8, 0.9, 1.0};

Block16 default_key() {
    Block16 k;
    for (int i = 0; i < 16; ++i)
        k[i] = static_cast<std::uint8_t>(i);
    return k;
}

// Electronic noise at half the model-power standard deviation.
double half_signal_sigma() {
    double mu = 0.0, var = 0.0;
    model_power_moments(mu, var);
    return 0.5 * std::sqrt(var);
}

// Criterion 1: the analytic supply-sharing ratios reproduce the worked
// values for four islands with five levels and unit leakage moments, and
// fewer supplies never increase the ratio.
Outcome criterion_1() {
    const VaMoments va = va_moments(kFiveLevels, 2.0);
    SnrParams p;
    p.n = 4;
    p.m = 4;
    p.mu_T = 1.0;
    p.sigma2_T = 1.0;
    p.mu_va = va.mu;
    p.sigma2_va = va.sigma2;
    const SnrTriple t = snr_analytic(p);

    const double want_n = 0.33333333333333337;
    const double want_2 = 0.31336405529953915;
    const double want_1 = 0.27983539094650195;
    if (std::abs(t.m_eq_n - want_n) > kWorkedValueTol ||
        !t.m_eq_2.has_value() ||
        std::abs(*t.m_eq_2 - want_2) > kWorkedValueTol ||
        std::abs(t.m_eq_1 - want_1) > kWorkedValueTol)
        return {false, fmt("got %.17g / %.17g / %.17g", t.m_eq_n,
                           t.m_eq_2 ? *t.m_eq_2 : -1.0, t.m_eq_1)};

    Rng rng(101, Stream::Bootstrap, 0);
    for (int rep = 0; rep < 1000; ++rep) {
        SnrParams q;
        q.n = 2 * (1 + rng.uniform_index(4));
        q.m = q.n;
        q.mu_T = rng.uniform(0.0, 100.0);
        q.sigma2_T = rng.uniform(1e-6, 50.0);
        q.mu_va = rng.uniform(0.0, 1.0);
        q.sigma2_va = rng.uniform(1e-9, 0.3);
        const SnrTriple o = snr_analytic(q);
        if (!(o.m_eq_n >= *o.m_eq_2 - kWorkedValueTol) ||
            !(*o.m_eq_2 >= o.m_eq_1 - kWorkedValueTol))
            return {false, "supply-sharing ordering violated"};
    }
    return {};
}

// Criterion 2: measured contribution ratios on aligned synthetic sets match
// the analytic prediction: about 1 for two islands and 1/3 for four, all
// supplies independent.
Outcome criterion_2() {
    for (const auto &[n, want] :
         {std::pair<std::size_t, double>{2, 1.0}, {4, 1.0 / 3.0}}) {
        SynthPlan plan;
        plan.island_config =
            IslandConfig::make(n, n, kFiveLevels);
        plan.n_traces = 50000;
        plan.rng_seed = 210 + n;
        plan.signal_key = default_key();
        plan.scale_time = false;
        ComposeParts parts;
        const TraceSet set = synth_pipeline(plan, &parts);
        const double snr = snr_empirical(set, parts);
        if (std::abs(snr - want) > kEmpiricalSnrRelTol * want)
            return {false, fmt("n=%.0f measured %.4f, predicted %.4f",
                               static_cast<double>(n), snr, want)};
    }
    return {};
}

// Criterion 3: correlation attack on an unprotected design recovers every
// key byte through electronic noise at half the signal deviation.
Outcome criterion_3() {
    SynthPlan plan;
    plan.island_config = IslandConfig::make(1, 1, {1.0});
    plan.n_traces = 10000;
    plan.rng_seed = 303;
    plan.signal_key = default_key();
    plan.pulse.noise_sigma = half_signal_sigma();
    const TraceSet set = synth_pipeline(plan);

    for (int b = 0; b < 16; ++b) {
        const AttackResult res =
            cpa_attack(set, b, LeakModel::HammingWeight, plan.signal_key);
        if (!res.pge || *res.pge != 0)
            return {false, fmt("byte %.0f landed at rank %.0f",
                               static_cast<double>(b),
                               static_cast<double>(res.pge ? *res.pge : -1))};
    }
    return {};
}

// Criterion 4: against a single-island dynamic-scaling design, clustering
// at the level count strictly reduces the measurements-to-disclosure
// compared with the plain attack.
Outcome criterion_4() {
    SynthPlan plan;
    plan.island_config = IslandConfig::make(1, 1, kFiveLevels);
    plan.n_traces = 100000;
    plan.rng_seed = 404;
    plan.signal_key = default_key();
    plan.pulse.noise_sigma = half_signal_sigma();
    const TraceSet set = extract_roi(synth_pipeline(plan), 64);

    const std::vector<std::size_t> schedule{1000, 2000, 4000, 8000,
                                            16000, 32000, 64000, 100000};
    const std::vector<SweepRow> rows =
        sweep_k(set, {1, 5}, LeakModel::HammingWeight, plan.signal_key, 44,
                schedule);
    const auto mtd_of = [](const SweepRow &r) {
        return r.mtd.disclosed_at ? static_cast<double>(*r.mtd.disclosed_at)
                                  : kInf;
    };
    const double plain = mtd_of(rows[0]);
    const double clustered = mtd_of(rows[1]);
    if (!(clustered < plain))
        return {false,
                fmt("disclosure at K=5: %.0f, K=1: %.0f", clustered, plain)};
    return {};
}

// Criterion 5: the ideal cluster count equals the number of distinct
// supply-voltage combinations.
Outcome criterion_5() {
    // Direct enumeration of multisets, recursion over the first symbol.
    struct Counter {
        static std::uint64_t count(std::uint64_t m, std::uint64_t g) {
            if (m == 0 || g == 1)
                return 1;
            std::uint64_t total = 0;
            for (std::uint64_t take = 0; take <= m; ++take)
                total += count(m - take, g - 1);
            return total;
        }
    };
    for (std::uint64_t m = 1; m <= 6; ++m)
        for (std::uint64_t g = 1; g <= 8; ++g)
            if (ideal_k(m, g) != Counter::count(m, g))
                return {false, fmt("mismatch at m=%.0f g=%.0f",
                                   static_cast<double>(m),
                                   static_cast<double>(g))};
    const std::uint64_t anchors[4] = {5, 15, 35, 70};
    for (std::uint64_t m = 1; m <= 4; ++m)
        if (ideal_k(m, 5) != anchors[m - 1])
            return {false, "five-level anchor mismatch"};
    return {};
}

// Criterion 6: four islands on four independent supplies resist the
// clustering attack across a wide cluster-count sweep: average fused PGE
// stays high and the key is never disclosed. Measurement noise is set to
// a realistic capture level (per-sample SNR around 3e-3); with noise far
// below that, the idealized pulse model leaks enough for clustering to
// break even this configuration.
Outcome criterion_6() {
    SynthPlan plan;
    plan.island_config = IslandConfig::make(4, 4, kFiveLevels);
    plan.n_traces = 200000;
    plan.rng_seed = 606;
    plan.signal_key = default_key();
    plan.pulse.noise_sigma = 64.0;
    const TraceSet set = extract_roi(synth_pipeline(plan), 64);

    std::vector<int> ks;
    for (int k = 10; k <= 100; k += 10)
        ks.push_back(k);
    const std::vector<SweepRow> rows =
        sweep_k(set, ks, LeakModel::HammingWeight, plan.signal_key, 66,
                std::vector<std::size_t>{100000, 200000});
    for (const SweepRow &row : rows) {
        if (row.mtd.disclosed_at)
            return {false, fmt("K=%.0f disclosed at %.0f",
                               static_cast<double>(row.k),
                               static_cast<double>(*row.mtd.disclosed_at))};
        if (row.avg_fused_pge <= kRobustnessMinPge)
            return {false, fmt("K=%.0f avg fused PGE %.2f",
                               static_cast<double>(row.k),
                               row.avg_fused_pge)};
    }
    return {};
}

// Criterion 7: exact dynamic time warping matches an exhaustive search over
// all monotone step paths on small inputs.
Outcome criterion_7() {
    struct Brute {
        static double min_cost(const std::vector<float> &a,
                               const std::vector<float> &b, std::size_t i,
                               std::size_t j) {
            const double d = static_cast<double>(a[i]) - b[j];
            const double here = d * d;
            if (i + 1 == a.size() && j + 1 == b.size())
                return here;
            double best = kInf;
            if (i + 1 < a.size())
                best = std::min(best, min_cost(a, b, i + 1, j));
            if (j + 1 < b.size())
                best = std::min(best, min_cost(a, b, i, j + 1));
            if (i + 1 < a.size() && j + 1 < b.size())
                best = std::min(best, min_cost(a, b, i + 1, j + 1));
            return here + best;
        }
    };

    Rng rng(707, Stream::Bootstrap, 0);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<float> a(1 + rng.uniform_index(8));
        std::vector<float> b(1 + rng.uniform_index(8));
        for (auto &v : a)
            v = static_cast<float>(rng.uniform() * 4.0 - 2.0);
        for (auto &v : b)
            v = static_cast<float>(rng.uniform() * 4.0 - 2.0);
        const DtwResult res = dtw(a, b);
        const double brute = Brute::min_cost(a, b, 0, 0);
        if (std::abs(res.cost - brute) > kPathCostTol)
            return {false, fmt("cost %.12f, exhaustive %.12f", res.cost,
                               brute)};
        res.path.validate(a.size(), b.size());
        if (std::abs(res.cost - dtw(b, a).cost) > kPathCostTol)
            return {false, "cost is not symmetric"};
        if (dtw(a, a).cost != 0.0)
            return {false, "self-alignment cost is nonzero"};
    }
    return {};
}

// Criterion 8: elastic alignment repairs unstable-clock distortion on an
// unprotected design, but does not improve the attack against a two-island
// scaling design, where the distortion carries the secret-independent mix.
Outcome criterion_8() {
    // Repair half: corrupt single encryptions with 10 percent clock jitter
    // and realign; correlation with the clean reference must come back.
    SynthPlan clean_plan;
    clean_plan.island_config = IslandConfig::make(1, 1, {1.0});
    clean_plan.n_traces = 200;
    clean_plan.rng_seed = 808;
    clean_plan.signal_key = default_key();
    const TraceSet clean = synth_pipeline(clean_plan);

    Rng jitter_rng(809, Stream::ClockJitter, 0);
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const std::vector<float> &ref = clean.trace(i).samples;
        const std::vector<float> bent =
            corrupt_unstable_clock(ref, 0.10, jitter_rng);
        const DtwResult d = dtw(bent, ref);
        const std::vector<float> fixed = elastic_align(bent, ref, d.path);
        std::vector<double> x(fixed.begin(), fixed.end());
        std::vector<double> y(ref.begin(), ref.end());
        const double rho = pearson(x, y);
        if (rho < kRealignMinCorrelation)
            return {false, fmt("realigned correlation %.4f on trace %.0f",
                               rho, static_cast<double>(i))};
    }

    // Negative half: on the randomized two-island mix under measurement
    // noise, the warp locks onto noise features, so aligning to one
    // reference trace must not lower the average PGE.
    SynthPlan plan;
    plan.island_config = IslandConfig::make(2, 2, kFiveLevels);
    plan.n_traces = 3000;
    plan.rng_seed = 40001;
    plan.signal_key = default_key();
    plan.pulse.noise_sigma = 8.0;
    const TraceSet set = synth_pipeline(plan);

    const auto attack_avg = [&](const TraceSet &s) {
        const TraceSet roi = extract_roi(s, 64);
        std::vector<AttackResult> bytes;
        for (int b = 0; b < 16; ++b)
            bytes.push_back(cpa_attack(roi, b, LeakModel::HammingWeight,
                                       plan.signal_key));
        return avg_pge(bytes);
    };
    const double before = attack_avg(set);
    const double after = attack_avg(align_set(set, 0, 8));
    if (before > 100.0)
        return {false, fmt("attack not viable before alignment, PGE %.2f",
                           before)};
    if (after < before - kAlignRegressionSlack)
        return {false, fmt("alignment helped: before %.2f, after %.2f",
                           before, after)};
    return {};
}

// Criterion 9: across twenty seeds, the constant-voltage design always
// fails the fixed-vs-random leakage test while the four-supply randomized
// design almost always passes, and loosening the threshold never reduces
// the count of failing samples.
Outcome criterion_9() {
    int masked_passes = 0;
    for (int s = 0; s < kTvlaSeeds; ++s) {
        SynthPlan plan;
        plan.n_traces = 32;
        plan.rng_seed = 900 + static_cast<std::uint64_t>(s);
        plan.signal_key = default_key();
        plan.pulse.noise_sigma = 0.25;

        // Worst-case plaintext: maximal model power in every byte.
        int hot = 0;
        for (int x = 0; x < 256; ++x)
            if (hamming_weight(sbox(static_cast<std::uint8_t>(x))) == 8)
                hot = x;
        Block16 fixed_pt;
        for (int i = 0; i < 16; ++i)
            fixed_pt[i] = static_cast<std::uint8_t>(hot) ^
                          plan.signal_key[i];

        plan.island_config = IslandConfig::make(4, 4, {0.8});
        const auto [cf, cr] = make_tvla_batches(plan, fixed_pt, 16);
        const TvlaReport constant =
            tvla_fixed_vs_random(cf, cr, 4.5, plan.rng_seed);
        if (constant.pass)
            return {false, fmt("constant voltage passed at seed %.0f",
                               static_cast<double>(s))};
        const TvlaReport loose =
            tvla_fixed_vs_random(cf, cr, 2.0, plan.rng_seed);
        if (loose.fail_sample_count < constant.fail_sample_count)
            return {false, "loose threshold flagged fewer samples"};

        plan.island_config = IslandConfig::make(4, 4, {0.6, 0.7, 0.8});
        const auto [mf, mr] = make_tvla_batches(plan, fixed_pt, 16);
        const TvlaReport masked =
            tvla_fixed_vs_random(mf, mr, 4.5, plan.rng_seed);
        if (masked.pass)
            ++masked_passes;
    }
    if (masked_passes < kTvlaMinMaskedPasses)
        return {false, fmt("randomized design passed only %.0f of %.0f",
                           static_cast<double>(masked_passes),
                           static_cast<double>(kTvlaSeeds))};
    return {};
}

// Criterion 10: a seeded experiment reruns byte-identically, and the worker
// count never changes any artifact.
Outcome criterion_10() {
    const fs::path base = fs::temp_directory_path() / "voltscope_acceptance_c10";
    fs::remove_all(base);
    fs::create_directories(base);

    const auto config_for = [&](const std::string &dir) {
        Json synth;
        synth["islands"] = 2;
        synth["supplies"] = 2;
        synth["levels"] = {0.7, 1.0};
        synth["traces"] = 400;
        synth["key"] = "000102030405060708090a0b0c0d0e0f";
        synth["noise_sigma"] = 0.5;
        Json attack;
        attack["type"] = "cluster";
        attack["k"] = 3;
        attack["key"] = "000102030405060708090a0b0c0d0e0f";
        attack["mtd_schedule"] = {200, 400};
        Json cfg;
        cfg["schema_version"] = 1;
        cfg["kind"] = "attack";
        cfg["seed"] = 1010;
        cfg["out_dir"] = (base / dir).string();
        cfg["synth"] = synth;
        cfg["roi_window"] = 32;
        cfg["outputs"] =
            Json::object({{"traces", "traces.itrc"}, {"report", "report.json"}});
        cfg["attack"] = attack;
        return cfg;
    };
    const auto snapshot = [](const fs::path &dir) {
        std::map<std::string, std::string> out;
        for (const auto &e : fs::directory_iterator(dir)) {
            std::ifstream in(e.path(), std::ios::binary);
            out[e.path().filename().string()] =
                std::string((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        }
        return out;
    };
    const auto artifacts_of = [](const std::map<std::string, std::string> &m) {
        return Json::parse(m.at("manifest.json"))["artifacts"];
    };

    Outcome out;
    run_experiment(ExperimentConfig::from_json(config_for("a")));
    const auto first = snapshot(base / "a");
    run_experiment(ExperimentConfig::from_json(config_for("a")));
    const auto again = snapshot(base / "a");
    if (first != again)
        out = {false, "rerun produced different bytes"};

    if (out.ok) {
        set_worker_cap(1);
        run_experiment(ExperimentConfig::from_json(config_for("w1")));
        set_worker_cap(3);
        run_experiment(ExperimentConfig::from_json(config_for("w3")));
        set_worker_cap(0);
        auto w1 = snapshot(base / "w1");
        auto w3 = snapshot(base / "w3");
        // The manifests embed the differing output paths; the artifact
        // list with checksums must still match exactly.
        if (artifacts_of(w1) != artifacts_of(w3))
            out = {false, "worker count changed an artifact checksum"};
        w1.erase("manifest.json");
        w3.erase("manifest.json");
        if (out.ok && w1 != w3)
            out = {false, "worker count changed artifact bytes"};
    }
    fs::remove_all(base);
    return out;
}

// Criterion 11: the misaligned-correlation predictor reproduces worked
// values.
Outcome criterion_11() {
    const struct {
        MisalignmentParams mp;
        double want;
    } cases[] = {
        {{0.8, 0.5, 1.0, 4.0}, 0.2},
        {{1.0, 1.0, 2.0, 2.0}, 1.0},
        {{0.6, 0.25, 0.09, 0.36}, 0.075},
    };
    for (const auto &c : cases) {
        const double got = predict_misaligned_rho(c.mp);
        if (std::abs(got - c.want) > kWorkedValueTol)
            return {false, fmt("predicted %.12f, expected %.12f", got,
                               c.want)};
    }
    return {};
}

} // namespace

int main(int argc, char **argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc)
            only = std::atoi(argv[++i]);
    }

    Outcome (*criteria[])() = {
        criterion_1, criterion_2, criterion_3, criterion_4,
        criterion_5, criterion_6, criterion_7, criterion_8,
        criterion_9, criterion_10, criterion_11,
    };
    const int n = static_cast<int>(sizeof criteria / sizeof criteria[0]);
    if (only < 0 || only > n) {
        std::fprintf(stderr, "no such criterion: %d\n", only);
        return 2;
    }

    bool all_ok = true;
    for (int c = 1; c <= n; ++c) {
        if (only != 0 && c != only)
            continue;
        Outcome res;
        try {
            res = criteria[c - 1]();
        } catch (const std::exception &e) {
            res = {false, std::string("exception: ") + e.what()};
        }
        if (res.ok)
            std::printf("criterion %d: PASS\n", c);
        else
            std::printf("criterion %d: FAIL - %s\n", c, res.detail.c_str());
        std::fflush(stdout);
        all_ok = all_ok && res.ok;
    }
    return all_ok ? 0 : 1;
}
