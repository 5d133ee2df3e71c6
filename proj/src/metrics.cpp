#include "voltscope/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "voltscope/aes_model.hpp"
#include "voltscope/parallel.hpp"
#include "voltscope/rng.hpp"

namespace voltscope {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double island_var(double mu_va, double sigma2_va, double mu_T,
                  double sigma2_T) {
    return sigma2_va * sigma2_T + sigma2_va * mu_T * mu_T +
           mu_va * mu_va * sigma2_T;
}

// Across-trace mean and variance of one column of a part matrix.
void column_stats(const std::vector<std::vector<float>> &rows,
                  std::size_t col, double &mean, double &var) {
    double sum = 0.0, sumsq = 0.0;
    for (const auto &r : rows) {
        const double x = r[col];
        sum += x;
        sumsq += x * x;
    }
    const double n = static_cast<double>(rows.size());
    mean = sum / n;
    var = std::max(0.0, sumsq / n - mean * mean);
}

std::size_t signal_peak_sample(const std::vector<std::vector<float>> &sig) {
    const std::size_t len = sig.front().size();
    std::vector<double> mean(len, 0.0);
    for (const auto &r : sig)
        for (std::size_t s = 0; s < len; ++s)
            mean[s] += r[s];
    std::size_t best = 0;
    for (std::size_t s = 1; s < len; ++s)
        if (mean[s] > mean[best])
            best = s;
    return best;
}

void check_parts(const TraceSet &set, const ComposeParts &parts) {
    if (parts.signal.size() != set.size() ||
        parts.noise.size() != set.size() || set.empty())
        throw std::invalid_argument(
            "decomposition unavailable; compose with retained components");
    const std::size_t len = parts.signal.front().size();
    for (const auto &r : parts.signal)
        if (r.size() != len)
            throw std::invalid_argument("ragged signal decomposition");
    for (const auto &r : parts.noise)
        if (r.size() != len)
            throw std::invalid_argument("ragged noise decomposition");
}

std::uint64_t fnv1a(const void *data, std::size_t bytes,
                    std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto *p = static_cast<const unsigned char *>(data);
    for (std::size_t i = 0; i < bytes; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Content hash making the group split independent of trace order.
std::uint64_t trace_hash(const Trace &t) {
    std::uint64_t h = fnv1a(t.plaintext.data(), t.plaintext.size());
    h = fnv1a(t.samples.data(), t.samples.size() * sizeof(float), h);
    return h;
}

// Seeded half/half split after ordering by content hash.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>>
split_halves(const TraceSet &set, std::uint64_t seed,
             std::uint64_t stream_index) {
    const std::size_t n = set.size();
    std::vector<std::pair<std::uint64_t, std::size_t>> keyed(n);
    for (std::size_t i = 0; i < n; ++i)
        keyed[i] = {trace_hash(set.trace(i)), i};
    std::sort(keyed.begin(), keyed.end());

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i)
        order[i] = keyed[i].second;
    Rng rng(seed, Stream::GroupSplit, stream_index);
    for (std::size_t i = n; i > 1; --i)
        std::swap(order[i - 1], order[rng.uniform_index(i)]);

    const std::size_t half = n / 2;
    return {std::vector<std::size_t>(order.begin(), order.begin() + half),
            std::vector<std::size_t>(order.begin() + half, order.end())};
}

Matrix<float> gather_resampled(const TraceSet &set,
                               const std::vector<std::size_t> &idx,
                               std::size_t len) {
    Matrix<float> m(idx.size(), len);
    for (std::size_t r = 0; r < idx.size(); ++r) {
        const std::vector<float> v =
            resample_to_length(set.trace(idx[r]).samples, len);
        std::copy(v.begin(), v.end(), m.row(r));
    }
    return m;
}

} // namespace

void SnrParams::validate() const {
    if (n < 1 || m < 1 || m > n)
        throw std::invalid_argument("need 1 <= supplies <= islands");
    if (sigma2_T < 0.0 || sigma2_va < 0.0)
        throw std::invalid_argument("variances must be non-negative");
}

VaMoments va_moments(const std::vector<double> &levels, double alpha) {
    if (levels.empty())
        throw std::invalid_argument("no voltage levels");
    double sum = 0.0, sumsq = 0.0;
    for (double v : levels) {
        const double a = std::pow(v, alpha);
        sum += a;
        sumsq += a * a;
    }
    const double inv = 1.0 / static_cast<double>(levels.size());
    VaMoments m;
    m.mu = sum * inv;
    m.sigma2 = std::max(0.0, sumsq * inv - m.mu * m.mu);
    return m;
}

SnrTriple snr_analytic(const SnrParams &p) {
    p.validate();
    if (p.n < 2)
        throw std::invalid_argument(
            "island SNR formulas need at least two islands");
    const double num =
        island_var(p.mu_va, p.sigma2_va, p.mu_T, p.sigma2_T);
    const double amp = p.sigma2_va * p.mu_T * p.mu_T;
    const double common =
        static_cast<double>(p.n - 1) *
        (p.mu_va * p.mu_va * p.sigma2_T + p.sigma2_va * p.sigma2_T);
    const double nd = static_cast<double>(p.n);

    SnrTriple out;
    const double den_n = static_cast<double>(p.n - 1) * amp + common;
    out.m_eq_n = den_n > 0.0 ? num / den_n : kInf;
    if (p.n % 2 == 0) {
        const double h = nd / 2.0;
        const double den_2 = ((h - 1.0) * (h - 1.0) + h * h) * amp + common;
        out.m_eq_2 = den_2 > 0.0 ? num / den_2 : kInf;
    }
    const double den_1 =
        static_cast<double>(p.n - 1) * static_cast<double>(p.n - 1) * amp +
        common;
    out.m_eq_1 = den_1 > 0.0 ? num / den_1 : kInf;
    return out;
}

double snr_general(const std::vector<IslandMoments> &islands) {
    if (islands.empty())
        throw std::invalid_argument("no islands");
    for (const IslandMoments &im : islands)
        if (im.sigma2_T < 0.0 || im.sigma2_va < 0.0)
            throw std::invalid_argument("variances must be non-negative");
    const double num = island_var(islands[0].mu_va, islands[0].sigma2_va,
                                  islands[0].mu_T, islands[0].sigma2_T);
    double den = 0.0;
    for (std::size_t i = 1; i < islands.size(); ++i)
        den += island_var(islands[i].mu_va, islands[i].sigma2_va,
                          islands[i].mu_T, islands[i].sigma2_T);
    return den > 0.0 ? num / den : kInf;
}

double snr_single_island_dvs(double mu_va, double sigma2_va, double mu_T,
                             double sigma2_T) {
    if (sigma2_va < 0.0 || sigma2_T < 0.0)
        throw std::invalid_argument("variances must be non-negative");
    const double den = sigma2_va * (sigma2_T + mu_T * mu_T);
    return den > 0.0 ? mu_va * mu_va * sigma2_T / den : kInf;
}

double attenuated_rho(double rho_ap, double snr) {
    if (snr < 0.0)
        throw std::invalid_argument("SNR must be non-negative");
    if (snr == 0.0)
        return 0.0;
    if (std::isinf(snr))
        return rho_ap;
    return rho_ap / std::sqrt(1.0 + 1.0 / snr);
}

double snr_empirical(const TraceSet &set, const ComposeParts &parts) {
    check_parts(set, parts);
    const std::size_t peak = signal_peak_sample(parts.signal);
    double mean, var_sig, var_noise;
    column_stats(parts.signal, peak, mean, var_sig);
    column_stats(parts.noise, peak, mean, var_noise);
    return var_noise > 0.0 ? var_sig / var_noise : kInf;
}

double snr_empirical_classed(const TraceSet &set, const Block16 &key) {
    if (set.size() < 2)
        throw std::invalid_argument("need at least two traces");
    if (!set.uniform_length())
        throw std::invalid_argument("traces must have uniform length");

    // The model power is a sum of 16 byte weights, so class ids run 0..128.
    constexpr std::size_t kClasses = 129;
    const std::size_t n = set.size();
    const std::size_t len = set.n_samples();

    std::vector<int> cls(n);
    for (std::size_t i = 0; i < n; ++i)
        cls[i] = static_cast<int>(
            first_round_model_power(set.trace(i).plaintext, key));

    std::vector<double> sum(kClasses * len, 0.0);
    std::vector<double> sumsq(kClasses * len, 0.0);
    std::vector<std::size_t> count(kClasses, 0);
    for (std::size_t i = 0; i < n; ++i) {
        double *row_sum = sum.data() + cls[i] * len;
        double *row_sq = sumsq.data() + cls[i] * len;
        const auto &samples = set.trace(i).samples;
        for (std::size_t s = 0; s < len; ++s) {
            const double x = samples[s];
            row_sum[s] += x;
            row_sq[s] += x * x;
        }
        ++count[cls[i]];
    }

    double best = 0.0;
    for (std::size_t s = 0; s < len; ++s) {
        double grand = 0.0;
        for (std::size_t c = 0; c < kClasses; ++c)
            grand += sum[c * len + s];
        grand /= static_cast<double>(n);
        double between = 0.0, within = 0.0;
        for (std::size_t c = 0; c < kClasses; ++c) {
            if (count[c] == 0)
                continue;
            const double nc = static_cast<double>(count[c]);
            const double mc = sum[c * len + s] / nc;
            between += nc * (mc - grand) * (mc - grand);
            within += sumsq[c * len + s] - nc * mc * mc;
        }
        const double ratio =
            within > 0.0 ? between / within : (between > 0.0 ? kInf : 0.0);
        best = std::max(best, ratio);
    }
    return best;
}

CovarianceCheck covariance_decomposition_check(const TraceSet &set,
                                               const ComposeParts &parts,
                                               std::uint64_t seed,
                                               int n_bootstrap) {
    check_parts(set, parts);
    if (set.config().n_islands != 2)
        throw std::invalid_argument("covariance check needs two islands");
    if (n_bootstrap < 2)
        throw std::invalid_argument("need at least two bootstrap rounds");

    const std::size_t n = set.size();
    const std::size_t peak = signal_peak_sample(parts.signal);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = parts.signal[i][peak];
        b[i] = parts.noise[i][peak];
    }

    auto cov_of = [&](const std::vector<std::size_t> *idx) {
        double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = idx ? (*idx)[i] : i;
            sa += a[j];
            sb += b[j];
            sab += a[j] * b[j];
            saa += a[j] * a[j];
            sbb += b[j] * b[j];
        }
        const double inv = 1.0 / static_cast<double>(n);
        CovarianceCheck c;
        const double ma = sa * inv, mb = sb * inv;
        const double va = saa * inv - ma * ma;
        const double vb = sbb * inv - mb * mb;
        c.cov_term = sab * inv - ma * mb;
        c.var_parts = va + vb;
        return c;
    };

    CovarianceCheck out = cov_of(nullptr);
    {
        double ssum = 0, ssumsq = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double x = a[i] + b[i];
            ssum += x;
            ssumsq += x * x;
        }
        const double inv = 1.0 / static_cast<double>(n);
        const double m = ssum * inv;
        out.var_sum = ssumsq * inv - m * m;
    }

    std::vector<double> covs(n_bootstrap);
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int r = 0; r < n_bootstrap; ++r) {
        Rng rng(seed, Stream::Bootstrap, static_cast<std::uint64_t>(r));
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i)
            idx[i] = rng.uniform_index(n);
        covs[r] = cov_of(&idx).cov_term;
    }
    double msum = 0.0;
    for (double c : covs)
        msum += c;
    const double mc = msum / n_bootstrap;
    double vsum = 0.0;
    for (double c : covs)
        vsum += (c - mc) * (c - mc);
    out.cov_sigma = std::sqrt(vsum / n_bootstrap);
    return out;
}

void MisalignmentParams::validate() const {
    if (rho_ap < -1.0 || rho_ap > 1.0)
        throw std::invalid_argument("rho_ap must lie in [-1, 1]");
    if (p < 0.0 || p > 1.0)
        throw std::invalid_argument("p must lie in [0, 1]");
    if (var_secret < 0.0 || var_secret > var_total)
        throw std::invalid_argument(
            "need 0 <= var_secret <= var_total");
}

double predict_misaligned_rho(const MisalignmentParams &mp) {
    mp.validate();
    if (mp.var_total == 0.0)
        throw std::invalid_argument("total variance must be positive");
    return mp.rho_ap * mp.p * std::sqrt(mp.var_secret / mp.var_total);
}

std::vector<double> welch_t(const Matrix<float> &group_a,
                            const Matrix<float> &group_b) {
    if (group_a.rows() < 2 || group_b.rows() < 2)
        throw std::invalid_argument("each group needs at least two traces");
    if (group_a.cols() != group_b.cols())
        throw std::invalid_argument("sample length mismatch");
    const std::size_t len = group_a.cols();

    auto stats = [len](const Matrix<float> &g, std::vector<double> &mean,
                       std::vector<double> &var) {
        mean.assign(len, 0.0);
        var.assign(len, 0.0);
        for (std::size_t r = 0; r < g.rows(); ++r) {
            const float *row = g.row(r);
            for (std::size_t s = 0; s < len; ++s) {
                const double x = row[s];
                mean[s] += x;
                var[s] += x * x;
            }
        }
        const double n = static_cast<double>(g.rows());
        for (std::size_t s = 0; s < len; ++s) {
            mean[s] /= n;
            // Sample variance with the n-1 denominator.
            var[s] = std::max(0.0,
                              (var[s] - n * mean[s] * mean[s]) / (n - 1.0));
        }
    };

    std::vector<double> ma, va, mb, vb;
    stats(group_a, ma, va);
    stats(group_b, mb, vb);

    const double na = static_cast<double>(group_a.rows());
    const double nb = static_cast<double>(group_b.rows());
    std::vector<double> t(len);
    for (std::size_t s = 0; s < len; ++s) {
        const double denom = std::sqrt(va[s] / na + vb[s] / nb);
        const double num = ma[s] - mb[s];
        if (denom == 0.0)
            t[s] = num == 0.0 ? 0.0 : std::copysign(kInf, num);
        else
            t[s] = num / denom;
    }
    return t;
}

TvlaReport tvla_fixed_vs_random(const TraceSet &fixed,
                                const TraceSet &random_set, double threshold,
                                std::uint64_t seed) {
    if (fixed.size() < 4 || random_set.size() < 4)
        throw std::invalid_argument(
            "each class needs at least four traces");
    if (!(threshold > 0.0))
        throw std::invalid_argument("threshold must be positive");

    std::vector<std::size_t> lengths;
    lengths.reserve(fixed.size() + random_set.size());
    for (const Trace &t : fixed.traces())
        lengths.push_back(t.samples.size());
    for (const Trace &t : random_set.traces())
        lengths.push_back(t.samples.size());
    std::sort(lengths.begin(), lengths.end());
    const std::size_t target = lengths[(lengths.size() - 1) / 2];

    const auto [f1, f2] = split_halves(fixed, seed, 0);
    const auto [r1, r2] = split_halves(random_set, seed, 1);

    TvlaReport report;
    report.threshold = threshold;
    report.normalized_length = target;
    report.t_scores_group1 =
        welch_t(gather_resampled(fixed, f1, target),
                gather_resampled(random_set, r1, target));
    report.t_scores_group2 =
        welch_t(gather_resampled(fixed, f2, target),
                gather_resampled(random_set, r2, target));

    report.fail_sample_count = 0;
    for (std::size_t s = 0; s < target; ++s)
        if (std::abs(report.t_scores_group1[s]) > threshold &&
            std::abs(report.t_scores_group2[s]) > threshold)
            ++report.fail_sample_count;
    report.pass = report.fail_sample_count == 0;
    return report;
}

std::pair<TraceSet, TraceSet> make_tvla_batches(
    const SynthPlan &plan, const Block16 &fixed_plaintext, int batch_size,
    std::optional<int> position) {
    plan.validate();
    if (batch_size < 1)
        throw std::invalid_argument("batch size must be positive");
    const int interest =
        position ? *position : batch_size / 2;
    if (interest < 0 || interest >= batch_size)
        throw std::invalid_argument("interest position outside the batch");

    const IslandConfig &cfg = plan.island_config;
    const std::size_t n_islands = cfg.n_islands;
    const std::size_t n_batches = plan.n_traces;
    const std::size_t g = cfg.voltage_levels.size();

    std::vector<double> factor(g), gain(g);
    for (std::size_t l = 0; l < g; ++l) {
        factor[l] = plan.scale_time
                        ? time_scale_factor(cfg.voltage_levels[l], cfg)
                        : 1.0;
        gain[l] = std::pow(cfg.voltage_levels[l], cfg.alpha);
    }
    // Single-encryption "batches" are ordinary traces and must come out
    // uniform; real batches stay ragged across voltage draws.
    const double max_factor = *std::max_element(factor.begin(), factor.end());
    const std::size_t pad_len =
        batch_size == 1
            ? static_cast<std::size_t>(std::llround(
                  2.0 * plan.pulse.pulse_width * max_factor))
            : 0;

    // Class 0 carries the fixed plaintext at the interest slot, class 1 a
    // fresh random one; everything else about the two classes matches.
    auto build_class = [&](int cls) {
        std::vector<Trace> out(n_batches);
#pragma omp parallel for schedule(static) num_threads(worker_count())
        for (long long bi = 0; bi < static_cast<long long>(n_batches);
             ++bi) {
            const std::size_t batch = static_cast<std::size_t>(bi);
            const std::uint64_t uid =
                static_cast<std::uint64_t>(cls) * n_batches + batch;
            Rng vr(plan.rng_seed, Stream::Voltages, uid);
            std::vector<std::size_t> level_of_supply(cfg.n_supplies);
            for (std::size_t s = 0; s < cfg.n_supplies; ++s)
                level_of_supply[s] = vr.uniform_index(g);

            Rng pr(plan.rng_seed, Stream::TvlaPlaintexts, uid);
            Rng nr(plan.rng_seed, Stream::Noise, uid);

            Trace &dst = out[batch];
            dst.batch_size = static_cast<std::uint16_t>(
                std::min(batch_size, 65535));
            dst.key = plan.signal_key;
            dst.island_voltages.resize(n_islands);

            std::vector<std::vector<float>> scaled(n_islands);
            std::size_t longest = 0;
            for (std::size_t isl = 0; isl < n_islands; ++isl) {
                const std::size_t lvl =
                    level_of_supply[cfg.supply_of_island[isl]];
                const double v = cfg.voltage_levels[lvl];
                dst.island_voltages[isl] = static_cast<float>(v);

                std::vector<float> concat;
                concat.reserve(static_cast<std::size_t>(batch_size) * 2 *
                               plan.pulse.pulse_width);
                Block16 key = plan.signal_key;
                if (isl != 0)
                    for (auto &byte : key)
                        byte = pr.byte();
                for (int e = 0; e < batch_size; ++e) {
                    Block16 pt;
                    for (auto &byte : pt)
                        byte = pr.byte();
                    if (isl == 0 && e == interest) {
                        if (cls == 0)
                            pt = fixed_plaintext;
                        dst.plaintext = pt;
                    }
                    const Trace pulse =
                        generate_base_trace(pt, key, plan.pulse, nr);
                    concat.insert(concat.end(), pulse.samples.begin(),
                                  pulse.samples.end());
                }
                if (factor[lvl] != 1.0)
                    concat = time_scale(concat, factor[lvl]);
                if (gain[lvl] != 1.0)
                    for (float &x : concat)
                        x = static_cast<float>(x * gain[lvl]);
                longest = std::max(longest, concat.size());
                scaled[isl] = std::move(concat);
            }

            dst.samples.assign(std::max(longest, pad_len), 0.0f);
            for (const auto &isl_samples : scaled)
                for (std::size_t i = 0; i < isl_samples.size(); ++i)
                    dst.samples[i] += isl_samples[i];
        }
        return TraceSet(std::move(out), cfg, "synthetic");
    };

    return {build_class(0), build_class(1)};
}

} // namespace voltscope
