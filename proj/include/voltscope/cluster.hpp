#pragma once

// Unsupervised clustering attack: group traces by voltage similarity with
// K-means, attack each cluster separately, then fuse the per-cluster
// subkey rankings by average rank.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "voltscope/cpa.hpp"
#include "voltscope/matrix.hpp"
#include "voltscope/trace.hpp"

namespace voltscope {

struct ClusterModel {
    int k = 0;
    Matrix<double> centroids; // k rows, one per cluster
    std::vector<int> assignment;
    double inertia = 0.0;
    std::uint64_t seed = 0;
    // Objective value at each assignment step; non-increasing.
    std::vector<double> inertia_history;
};

struct FusedAttackResult {
    int k = 0;
    // Cluster ids that held fewer than two traces and sat out.
    std::vector<int> skipped_clusters;
    // [cluster][byte]; empty inner vector for a skipped cluster.
    std::vector<std::vector<AttackResult>> per_cluster;
    // Per byte: 256 guesses by ascending average rank across clusters.
    std::array<std::vector<int>, 16> fused_ranking;
    std::optional<std::array<int, 16>> fused_pge;
    std::optional<MtdReport> mtd;
};

// Lloyd iterations from a k-means++ start. Stops when every centroid
// moves less than tol (L2) or after max_iters. Deterministic for a given
// seed regardless of worker count.
ClusterModel kmeans(const TraceSet &set, int k, std::uint64_t seed,
                    int max_iters = 50, double tol = 1e-4);

// Number of distinct supply-voltage combinations: multisets of size m
// from g levels, C(m+g-1, m). Throws std::overflow_error when the value
// does not fit 64 bits.
std::uint64_t ideal_k(std::uint64_t m, std::uint64_t g);

FusedAttackResult cluster_attack(
    const TraceSet &set, int k, LeakModel model,
    const std::optional<Block16> &known_key, std::uint64_t seed,
    const std::optional<std::vector<std::size_t>> &mtd_schedule =
        std::nullopt);

struct SweepRow {
    int k = 0;
    MtdReport mtd;
    double avg_fused_pge = 0.0; // at the full trace count
};

// Disclosure estimate per candidate K, on one shared schedule.
std::vector<SweepRow> sweep_k(
    const TraceSet &set, const std::vector<int> &k_values, LeakModel model,
    const Block16 &known_key, std::uint64_t seed,
    const std::optional<std::vector<std::size_t>> &mtd_schedule =
        std::nullopt);

} // namespace voltscope
