#include "voltscope/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "voltscope/parallel.hpp"
#include "voltscope/rng.hpp"

namespace voltscope {

namespace {

double sq_dist(const float *x, const double *c, std::size_t len) {
    double d = 0.0;
    for (std::size_t s = 0; s < len; ++s) {
        const double diff = x[s] - c[s];
        d += diff * diff;
    }
    return d;
}

double sq_dist_rows(const double *a, const double *b, std::size_t len) {
    double d = 0.0;
    for (std::size_t s = 0; s < len; ++s) {
        const double diff = a[s] - b[s];
        d += diff * diff;
    }
    return d;
}

// Nearest centroid per trace; ties go to the lower cluster id.
void assign_step(const Matrix<float> &data, const Matrix<double> &centroids,
                 std::vector<int> &assignment, std::vector<double> &dist) {
    const std::size_t n = data.rows(), len = data.cols();
    const int k = static_cast<int>(centroids.rows());
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long long ti = 0; ti < static_cast<long long>(n); ++ti) {
        const std::size_t i = static_cast<std::size_t>(ti);
        double best = std::numeric_limits<double>::infinity();
        int best_c = 0;
        for (int c = 0; c < k; ++c) {
            const double d = sq_dist(data.row(i), centroids.row(c), len);
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        assignment[i] = best_c;
        dist[i] = best;
    }
}

// Centroid means recomputed with fixed-block partial sums combined in
// block order, so the result is identical for any worker count.
void update_step(const Matrix<float> &data,
                 const std::vector<int> &assignment, Matrix<double> &out,
                 std::vector<std::uint64_t> &counts) {
    const std::size_t n = data.rows(), len = data.cols();
    const int k = static_cast<int>(out.rows());
    const std::size_t blocks = block_count(n);

    Matrix<double> partial(blocks * k, len, 0.0);
    std::vector<std::uint64_t> pcount(blocks * k, 0);
#pragma omp parallel for schedule(static) num_threads(worker_count())
    for (long long bi = 0; bi < static_cast<long long>(blocks); ++bi) {
        const std::size_t b = static_cast<std::size_t>(bi);
        const std::size_t lo = b * kReduceBlock;
        const std::size_t hi = std::min(n, lo + kReduceBlock);
        for (std::size_t i = lo; i < hi; ++i) {
            const int c = assignment[i];
            double *row = partial.row(b * k + c);
            const float *x = data.row(i);
            for (std::size_t s = 0; s < len; ++s)
                row[s] += x[s];
            ++pcount[b * k + c];
        }
    }

    counts.assign(k, 0);
    Matrix<double> sums(k, len, 0.0);
    for (std::size_t b = 0; b < blocks; ++b)
        for (int c = 0; c < k; ++c) {
            counts[c] += pcount[b * k + c];
            const double *src = partial.row(b * k + c);
            double *dst = sums.row(c);
            for (std::size_t s = 0; s < len; ++s)
                dst[s] += src[s];
        }
    for (int c = 0; c < k; ++c) {
        if (counts[c] == 0)
            continue; // repaired by the caller
        const double inv = 1.0 / static_cast<double>(counts[c]);
        const double *src = sums.row(c);
        double *dst = out.row(c);
        for (std::size_t s = 0; s < len; ++s)
            dst[s] = src[s] * inv;
    }
}

} // namespace

ClusterModel kmeans(const TraceSet &set, int k, std::uint64_t seed,
                    int max_iters, double tol) {
    if (k <= 0)
        throw std::invalid_argument("cluster count must be positive");
    if (static_cast<std::size_t>(k) > set.size())
        throw std::invalid_argument("more clusters than traces");
    if (!set.uniform_length())
        throw std::invalid_argument("clustering needs uniform trace lengths");
    if (max_iters < 1)
        throw std::invalid_argument("need at least one iteration");

    const Matrix<float> data = set.sample_matrix();
    const std::size_t n = data.rows(), len = data.cols();

    ClusterModel model;
    model.k = k;
    model.seed = seed;
    model.centroids = Matrix<double>(k, len, 0.0);

    // k-means++ seeding: first pick uniform, then proportional to the
    // squared distance from the chosen set.
    Rng rng(seed, Stream::KmeansInit);
    std::vector<double> d2(n, std::numeric_limits<double>::infinity());
    std::size_t pick = rng.uniform_index(n);
    for (int c = 0; c < k; ++c) {
        const float *x = data.row(pick);
        double *dst = model.centroids.row(c);
        for (std::size_t s = 0; s < len; ++s)
            dst[s] = x[s];
        if (c + 1 == k)
            break;
#pragma omp parallel for schedule(static) num_threads(worker_count())
        for (long long ti = 0; ti < static_cast<long long>(n); ++ti) {
            const std::size_t i = static_cast<std::size_t>(ti);
            d2[i] = std::min(d2[i], sq_dist(data.row(i), dst, len));
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            total += d2[i];
        if (total <= 0.0) {
            pick = rng.uniform_index(n);
            continue;
        }
        const double u = rng.uniform() * total;
        double acc = 0.0;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
            acc += d2[i];
            if (acc >= u) {
                pick = i;
                break;
            }
        }
    }

    model.assignment.assign(n, 0);
    std::vector<double> dist(n, 0.0);
    std::vector<std::uint64_t> counts;
    Matrix<double> next = model.centroids;

    for (int iter = 0; iter < max_iters; ++iter) {
        assign_step(data, model.centroids, model.assignment, dist);
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            inertia += dist[i];
        model.inertia_history.push_back(inertia);
        model.inertia = inertia;

        update_step(data, model.assignment, next, counts);

        // Empty-cluster repair: hand each empty cluster the trace
        // currently farthest from its centroid.
        std::vector<std::size_t> order;
        for (int c = 0; c < k; ++c)
            if (counts[c] == 0) {
                if (order.empty()) {
                    order.resize(n);
                    std::iota(order.begin(), order.end(), std::size_t{0});
                    std::sort(order.begin(), order.end(),
                              [&](std::size_t a, std::size_t b) {
                                  if (dist[a] != dist[b])
                                      return dist[a] > dist[b];
                                  return a < b;
                              });
                }
                const std::size_t donor = order.front();
                order.erase(order.begin());
                const float *x = data.row(donor);
                double *dst = next.row(c);
                for (std::size_t s = 0; s < len; ++s)
                    dst[s] = x[s];
            }

        double moved = 0.0;
        for (int c = 0; c < k; ++c)
            moved = std::max(
                moved, std::sqrt(sq_dist_rows(model.centroids.row(c),
                                              next.row(c), len)));
        std::swap(model.centroids, next);
        if (moved < tol)
            break;
    }

    // Final assignment against the converged centroids.
    assign_step(data, model.centroids, model.assignment, dist);
    double inertia = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i)
        inertia += dist[i];
    model.inertia_history.push_back(inertia);
    model.inertia = inertia;
    return model;
}

std::uint64_t ideal_k(std::uint64_t m, std::uint64_t g) {
    if (m < 1 || g < 1)
        throw std::invalid_argument("supplies and levels must be positive");
    // C(m+g-1, m), multiplied in small steps with overflow checks.
    const std::uint64_t n = m + g - 1;
    if (n < m)
        throw std::overflow_error("combination count overflows");
    const std::uint64_t r = std::min(m, n - m);
    std::uint64_t result = 1;
    for (std::uint64_t i = 1; i <= r; ++i) {
        const unsigned __int128 next =
            static_cast<unsigned __int128>(result) * (n - r + i) / i;
        if (next > std::numeric_limits<std::uint64_t>::max())
            throw std::overflow_error("combination count overflows");
        result = static_cast<std::uint64_t>(next);
    }
    return result;
}

FusedAttackResult cluster_attack(
    const TraceSet &set, int k, LeakModel model,
    const std::optional<Block16> &known_key, std::uint64_t seed,
    const std::optional<std::vector<std::size_t>> &mtd_schedule) {
    const ClusterModel cm = kmeans(set, k, seed);

    FusedAttackResult res;
    res.k = k;
    res.per_cluster.resize(k);

    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < cm.assignment.size(); ++i)
        members[cm.assignment[i]].push_back(i);

    std::size_t active = 0;
    for (int c = 0; c < k; ++c) {
        if (members[c].size() < 2) {
            res.skipped_clusters.push_back(c);
            continue;
        }
        ++active;
        std::vector<Trace> sub;
        sub.reserve(members[c].size());
        for (std::size_t i : members[c])
            sub.push_back(set.trace(i));
        const TraceSet subset(std::move(sub), set.config(),
                              set.provenance(), set.sample_rate_hint());
        res.per_cluster[c].reserve(16);
        for (int b = 0; b < 16; ++b)
            res.per_cluster[c].push_back(
                cpa_attack(subset, b, model, known_key));
    }
    if (active == 0)
        throw std::runtime_error("all clusters degenerate");

    for (int b = 0; b < 16; ++b) {
        std::vector<std::uint64_t> rank_sum(256, 0);
        for (int c = 0; c < k; ++c) {
            if (res.per_cluster[c].empty())
                continue;
            const std::vector<int> &ranking =
                res.per_cluster[c][b].ranking;
            for (int r = 0; r < 256; ++r)
                rank_sum[ranking[r]] += static_cast<std::uint64_t>(r);
        }
        std::vector<int> fused(256);
        std::iota(fused.begin(), fused.end(), 0);
        std::sort(fused.begin(), fused.end(), [&](int a, int bb) {
            if (rank_sum[a] != rank_sum[bb])
                return rank_sum[a] < rank_sum[bb];
            return a < bb;
        });
        res.fused_ranking[b] = std::move(fused);
    }

    if (known_key) {
        std::array<int, 16> pges{};
        for (int b = 0; b < 16; ++b) {
            const auto &ranking = res.fused_ranking[b];
            pges[b] = static_cast<int>(
                std::find(ranking.begin(), ranking.end(),
                          (*known_key)[b]) -
                ranking.begin());
        }
        res.fused_pge = pges;
    }

    if (mtd_schedule) {
        if (!known_key)
            throw std::invalid_argument(
                "disclosure estimation needs the key");
        const auto prefix = detail::fused_prefix_attack(
            set, cm.assignment, k, model, *mtd_schedule);
        MtdReport mtd;
        mtd.schedule = *mtd_schedule;
        mtd.per_count_pge.resize(prefix.schedule.size());
        for (std::size_t snap = 0; snap < prefix.schedule.size(); ++snap) {
            bool all_zero = true;
            for (int b = 0; b < 16; ++b) {
                const auto &ranking = prefix.rankings[snap][b];
                const int pge = static_cast<int>(
                    std::find(ranking.begin(), ranking.end(),
                              (*known_key)[b]) -
                    ranking.begin());
                mtd.per_count_pge[snap][b] = pge;
                all_zero = all_zero && pge == 0;
            }
            if (all_zero && !mtd.disclosed_at)
                mtd.disclosed_at = prefix.schedule[snap];
        }
        res.mtd = std::move(mtd);
    }
    return res;
}

std::vector<SweepRow> sweep_k(
    const TraceSet &set, const std::vector<int> &k_values, LeakModel model,
    const Block16 &known_key, std::uint64_t seed,
    const std::optional<std::vector<std::size_t>> &mtd_schedule) {
    if (k_values.empty())
        throw std::invalid_argument("no cluster counts to sweep");
    const std::vector<std::size_t> schedule =
        mtd_schedule ? *mtd_schedule : default_mtd_schedule(set.size());

    std::vector<SweepRow> rows;
    rows.reserve(k_values.size());
    for (int k : k_values) {
        const ClusterModel cm = kmeans(set, k, seed);
        const auto prefix = detail::fused_prefix_attack(
            set, cm.assignment, k, model, schedule);

        SweepRow row;
        row.k = k;
        row.mtd.schedule = schedule;
        row.mtd.per_count_pge.resize(schedule.size());
        for (std::size_t snap = 0; snap < schedule.size(); ++snap) {
            bool all_zero = true;
            for (int b = 0; b < 16; ++b) {
                const auto &ranking = prefix.rankings[snap][b];
                const int pge = static_cast<int>(
                    std::find(ranking.begin(), ranking.end(),
                              known_key[b]) -
                    ranking.begin());
                row.mtd.per_count_pge[snap][b] = pge;
                all_zero = all_zero && pge == 0;
            }
            if (all_zero && !row.mtd.disclosed_at)
                row.mtd.disclosed_at = schedule[snap];
        }
        row.avg_fused_pge = avg_pge(row.mtd.per_count_pge.back());
        rows.push_back(std::move(row));
    }
    return rows;
}

} // namespace voltscope
