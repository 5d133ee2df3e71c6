#include "voltscope/cpa.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <stdexcept>

#include "voltscope/aes_model.hpp"
#include "voltscope/parallel.hpp"

namespace voltscope {

namespace {

// Variance terms this far below the raw second moment are treated as zero,
// absorbing float cancellation on constant baseline regions.
constexpr double kVarEps = 1e-12;

// Per-cluster, per-byte accumulator: trace samples bucketed by plaintext
// byte value. Guess statistics for all 256 candidates recombine from the
// 256 buckets, so adding a trace costs O(samples), not O(256 * samples).
struct PtBuckets {
    std::size_t n = 0;
    std::array<std::uint64_t, 256> count{};
    std::vector<double> sum_tt;     // per sample
    std::vector<double> sum_by_pt;  // 256 rows of per-sample sums

    void init(std::size_t n_samples) {
        sum_tt.assign(n_samples, 0.0);
        sum_by_pt.assign(256 * n_samples, 0.0);
    }

    void add(const float *samples, std::uint8_t ptv, std::size_t n_samples) {
        ++n;
        ++count[ptv];
        double *row = sum_by_pt.data() + std::size_t(ptv) * n_samples;
        for (std::size_t s = 0; s < n_samples; ++s) {
            const double x = samples[s];
            row[s] += x;
            sum_tt[s] += x * x;
        }
    }
};

struct GuessMoments {
    double sum_h = 0.0;
    double sum_hh = 0.0;
};

// Correlation row of one guess across samples, written into rho[0..S).
void guess_correlation(const PtBuckets &b, const int *leak, int guess,
                       const std::vector<double> &sum_t, double *rho,
                       std::size_t n_samples) {
    const double n = static_cast<double>(b.n);
    GuessMoments m;
    std::vector<double> sum_ht(n_samples, 0.0);
    for (int p = 0; p < 256; ++p) {
        const std::uint64_t c = b.count[p];
        if (c == 0)
            continue;
        const double h = leak[p ^ guess];
        m.sum_h += h * static_cast<double>(c);
        m.sum_hh += h * h * static_cast<double>(c);
        const double *row =
            b.sum_by_pt.data() + std::size_t(p) * n_samples;
        for (std::size_t s = 0; s < n_samples; ++s)
            sum_ht[s] += h * row[s];
    }
    const double var_h = n * m.sum_hh - m.sum_h * m.sum_h;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const double var_t = n * b.sum_tt[s] - sum_t[s] * sum_t[s];
        if (var_h <= kVarEps * n * m.sum_hh ||
            var_t <= kVarEps * n * b.sum_tt[s]) {
            rho[s] = 0.0;
            continue;
        }
        const double num = n * sum_ht[s] - m.sum_h * sum_t[s];
        rho[s] = std::clamp(num / std::sqrt(var_h * var_t), -1.0, 1.0);
    }
}

// Peak statistic per guess; absolute or signed per the caller.
std::vector<double> bucket_peaks(const PtBuckets &b, const int *leak,
                                 bool absolute, std::size_t n_samples) {
    std::vector<double> sum_t(n_samples, 0.0);
    for (int p = 0; p < 256; ++p) {
        if (b.count[p] == 0)
            continue;
        const double *row =
            b.sum_by_pt.data() + std::size_t(p) * n_samples;
        for (std::size_t s = 0; s < n_samples; ++s)
            sum_t[s] += row[s];
    }
    std::vector<double> peaks(256, 0.0);
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (int guess = 0; guess < 256; ++guess) {
        std::vector<double> rho(n_samples);
        guess_correlation(b, leak, guess, sum_t, rho.data(), n_samples);
        double best = absolute ? 0.0 : -2.0;
        for (std::size_t s = 0; s < n_samples; ++s) {
            const double v = absolute ? std::abs(rho[s]) : rho[s];
            best = std::max(best, v);
        }
        peaks[guess] = best;
    }
    return peaks;
}

std::vector<int> rank_guesses(const std::vector<double> &peaks) {
    std::vector<int> order(256);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (peaks[a] != peaks[b])
            return peaks[a] > peaks[b];
        return a < b;
    });
    return order;
}

int rank_of(const std::vector<int> &ranking, int guess) {
    for (int r = 0; r < 256; ++r)
        if (ranking[r] == guess)
            return r;
    throw std::logic_error("ranking is not a permutation");
}

std::array<int, 256> leak_table(LeakModel model) {
    std::array<int, 256> t;
    for (int x = 0; x < 256; ++x)
        t[x] = leak_value(model, static_cast<std::uint8_t>(x));
    return t;
}

void check_schedule(const std::vector<std::size_t> &schedule,
                    std::size_t n_traces) {
    if (schedule.empty())
        throw std::invalid_argument("empty schedule");
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        if (schedule[i] < 2)
            throw std::invalid_argument("schedule entries need >= 2 traces");
        if (i > 0 && schedule[i] <= schedule[i - 1])
            throw std::invalid_argument("schedule must strictly increase");
        if (schedule[i] > n_traces)
            throw std::invalid_argument("schedule exceeds trace count");
    }
}

} // namespace

double pearson(const std::vector<double> &x, const std::vector<double> &y) {
    if (x.size() != y.size())
        throw std::invalid_argument("length mismatch");
    if (x.size() < 2)
        throw std::invalid_argument("need at least two points");
    const double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        syy += y[i] * y[i];
        sxy += x[i] * y[i];
    }
    const double vx = n * sxx - sx * sx;
    const double vy = n * syy - sy * sy;
    if (vx <= kVarEps * n * sxx || vy <= kVarEps * n * syy)
        return 0.0;
    return std::clamp((n * sxy - sx * sy) / std::sqrt(vx * vy), -1.0, 1.0);
}

int leak_value(LeakModel model, std::uint8_t x) {
    const std::uint8_t out = sbox(x);
    switch (model) {
    case LeakModel::HammingWeight:
        return hamming_weight(out);
    case LeakModel::HammingDistance:
        return hamming_weight(static_cast<std::uint8_t>(out ^ x));
    }
    throw std::logic_error("unknown leakage model");
}

AttackResult cpa_attack(const TraceSet &set, int byte_index, LeakModel model,
                        const std::optional<Block16> &known_key,
                        bool absolute_peak) {
    if (byte_index < 0 || byte_index > 15)
        throw std::invalid_argument("byte index out of range");
    if (set.size() < 2)
        throw std::invalid_argument("need at least two traces");
    if (!set.uniform_length())
        throw std::invalid_argument("ragged traces; crop or align first");

    const std::size_t n_samples = set.n_samples();
    const auto leak = leak_table(model);

    PtBuckets buckets;
    buckets.init(n_samples);
    for (const Trace &t : set.traces())
        buckets.add(t.samples.data(), t.plaintext[byte_index], n_samples);

    AttackResult res;
    res.byte_index = byte_index;
    res.peak_correlation =
        bucket_peaks(buckets, leak.data(), absolute_peak, n_samples);
    res.ranking = rank_guesses(res.peak_correlation);

    std::vector<double> sum_t(n_samples, 0.0);
    for (int p = 0; p < 256; ++p)
        if (buckets.count[p] != 0) {
            const double *row =
                buckets.sum_by_pt.data() + std::size_t(p) * n_samples;
            for (std::size_t s = 0; s < n_samples; ++s)
                sum_t[s] += row[s];
        }
    res.correlation_trace.resize(n_samples);
    guess_correlation(buckets, leak.data(), res.ranking.front(), sum_t,
                      res.correlation_trace.data(), n_samples);

    if (known_key)
        res.pge = rank_of(res.ranking, (*known_key)[byte_index]);
    return res;
}

std::vector<std::size_t> default_mtd_schedule(std::size_t n_traces) {
    static const std::size_t grid[] = {1000,  2000,  5000,   10000, 16000,
                                       20000, 50000, 100000, 200000};
    std::vector<std::size_t> out;
    for (std::size_t c : grid)
        if (c <= n_traces)
            out.push_back(c);
    if (n_traces >= 2 && (out.empty() || out.back() != n_traces))
        out.push_back(n_traces);
    return out;
}

double avg_pge(const std::vector<AttackResult> &results) {
    if (results.size() != 16)
        throw std::invalid_argument("requires 16 bytes");
    std::array<int, 16> pges;
    for (std::size_t i = 0; i < 16; ++i) {
        if (!results[i].pge)
            throw std::invalid_argument("PGE missing; attack without key");
        pges[i] = *results[i].pge;
    }
    return avg_pge(pges);
}

double avg_pge(const std::array<int, 16> &pges) {
    double sum = 0.0;
    for (int p : pges)
        sum += p;
    return sum / 16.0;
}

namespace detail {

FusedPrefixReport fused_prefix_attack(const TraceSet &set,
                                      const std::vector<int> &assignment,
                                      int n_clusters, LeakModel model,
                                      const std::vector<std::size_t> &schedule) {
    if (!set.uniform_length())
        throw std::invalid_argument("ragged traces; crop or align first");
    check_schedule(schedule, set.size());
    if (n_clusters < 1)
        throw std::invalid_argument("need at least one cluster");
    if (assignment.size() != set.size())
        throw std::invalid_argument("assignment does not cover the set");
    for (int c : assignment)
        if (c < 0 || c >= n_clusters)
            throw std::invalid_argument("cluster id out of range");

    const std::size_t n_samples = set.n_samples();
    const std::size_t n_snap = schedule.size();
    const auto leak = leak_table(model);

    FusedPrefixReport report;
    report.schedule = schedule;
    report.rankings.resize(n_snap);
    report.active_clusters.assign(n_snap, 0);

    // Bucket storage is 256 rows per (cluster, byte); process bytes in
    // groups sized so the working set stays within a fixed budget.
    const std::size_t per_byte =
        static_cast<std::size_t>(n_clusters) * 257 * n_samples *
        sizeof(double);
    const std::size_t budget = std::size_t(768) << 20;
    const int group = static_cast<int>(
        std::clamp<std::size_t>(budget / std::max<std::size_t>(per_byte, 1),
                                1, 16));

    for (int byte0 = 0; byte0 < 16; byte0 += group) {
        const int nb = std::min(group, 16 - byte0);
        std::vector<PtBuckets> buckets(
            static_cast<std::size_t>(nb) * n_clusters);
        for (auto &b : buckets)
            b.init(n_samples);

        std::size_t next = 0;
        for (std::size_t snap = 0; snap < n_snap; ++snap) {
            for (; next < schedule[snap]; ++next) {
                const Trace &t = set.trace(next);
                const int c = assignment[next];
                for (int b = 0; b < nb; ++b)
                    buckets[std::size_t(b) * n_clusters + c].add(
                        t.samples.data(), t.plaintext[byte0 + b],
                        n_samples);
            }

            for (int b = 0; b < nb; ++b) {
                // Per-cluster rankings, then fusion by average rank.
                std::vector<std::uint64_t> rank_sum(256, 0);
                std::size_t active = 0;
                for (int c = 0; c < n_clusters; ++c) {
                    const PtBuckets &bk =
                        buckets[std::size_t(b) * n_clusters + c];
                    if (bk.n < 2)
                        continue;
                    ++active;
                    const auto peaks =
                        bucket_peaks(bk, leak.data(), true, n_samples);
                    const auto ranking = rank_guesses(peaks);
                    for (int r = 0; r < 256; ++r)
                        rank_sum[ranking[r]] += static_cast<std::uint64_t>(r);
                }
                std::vector<int> fused(256);
                std::iota(fused.begin(), fused.end(), 0);
                if (active > 0)
                    std::sort(fused.begin(), fused.end(),
                              [&](int a, int bb) {
                                  if (rank_sum[a] != rank_sum[bb])
                                      return rank_sum[a] < rank_sum[bb];
                                  return a < bb;
                              });
                report.rankings[snap][byte0 + b] = std::move(fused);
                if (byte0 + b == 0)
                    report.active_clusters[snap] = active;
            }
        }
    }
    return report;
}

} // namespace detail

MtdReport compute_mtd(const TraceSet &set, LeakModel model,
                      const Block16 &known_key,
                      std::vector<std::size_t> schedule) {
    check_schedule(schedule, set.size());
    const std::vector<int> assignment(set.size(), 0);
    const auto prefix =
        detail::fused_prefix_attack(set, assignment, 1, model, schedule);

    MtdReport report;
    report.schedule = std::move(schedule);
    report.per_count_pge.resize(report.schedule.size());
    for (std::size_t snap = 0; snap < report.schedule.size(); ++snap) {
        bool all_zero = true;
        for (int b = 0; b < 16; ++b) {
            const int pge =
                rank_of(prefix.rankings[snap][b], known_key[b]);
            report.per_count_pge[snap][b] = pge;
            all_zero = all_zero && pge == 0;
        }
        if (all_zero && !report.disclosed_at)
            report.disclosed_at = report.schedule[snap];
    }
    return report;
}

} // namespace voltscope
