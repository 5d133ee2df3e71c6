#pragma once

// Correlation power analysis. The engine partitions traces by plaintext
// byte value, so per-guess statistics for all 256 guesses come from one
// pass over the data followed by a 256 x 256 recombination. That also
// makes prefix attacks (for measurements-to-disclosure) incremental:
// accumulate traces in order, snapshot at each schedule boundary.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "voltscope/trace.hpp"

namespace voltscope {

enum class LeakModel {
    // Hamming weight of the first-round S-box output.
    HammingWeight,
    // Hamming distance between the S-box input and output.
    HammingDistance,
};

struct AttackResult {
    int byte_index = 0;
    // Guesses ordered by descending peak correlation; ties go to the
    // lower guess value.
    std::vector<int> ranking;
    // Peak |correlation| over samples, indexed by guess.
    std::vector<double> peak_correlation;
    // Rank of the correct subkey in `ranking`; requires a known key.
    std::optional<int> pge;
    // Signed per-sample correlation for the top-ranked guess.
    std::vector<double> correlation_trace;
};

struct MtdReport {
    std::vector<std::size_t> schedule;
    // First schedule entry where all sixteen PGEs are zero.
    std::optional<std::size_t> disclosed_at;
    // One entry per schedule count, sixteen PGEs each.
    std::vector<std::array<int, 16>> per_count_pge;
};

// Sample Pearson correlation; either input having (numerically) zero
// variance yields 0 rather than an error, since constant baseline regions
// are routine in power traces.
double pearson(const std::vector<double> &x, const std::vector<double> &y);

// Leakage value of the model for S-box input x (the plaintext byte XOR
// the key guess).
int leak_value(LeakModel model, std::uint8_t x);

AttackResult cpa_attack(const TraceSet &set, int byte_index, LeakModel model,
                        const std::optional<Block16> &known_key,
                        bool absolute_peak = true);

// Prefix attacks at each schedule count, traces taken in set order.
// The schedule must be strictly increasing with entries in [2, set size].
MtdReport compute_mtd(const TraceSet &set, LeakModel model,
                      const Block16 &known_key,
                      std::vector<std::size_t> schedule);

// Geometric default mirroring commonly reported disclosure granularity,
// clipped to the available trace count (which is always included).
std::vector<std::size_t> default_mtd_schedule(std::size_t n_traces);

double avg_pge(const std::vector<AttackResult> &results);
double avg_pge(const std::array<int, 16> &pges);

namespace detail {

// Incremental clustered prefix attack shared by compute_mtd and the
// clustering attack's disclosure estimation: per schedule count, fuse the
// per-cluster rankings by ascending average 0-based rank (clusters holding
// fewer than two prefix traces sit out). With a single cluster the fused
// ranking is exactly the plain CPA ranking.
struct FusedPrefixReport {
    std::vector<std::size_t> schedule;
    // [snapshot][byte] -> fused ranking, 256 guesses best-first.
    std::vector<std::array<std::vector<int>, 16>> rankings;
    // [snapshot] -> number of clusters that participated.
    std::vector<std::size_t> active_clusters;
};

FusedPrefixReport fused_prefix_attack(const TraceSet &set,
                                      const std::vector<int> &assignment,
                                      int n_clusters, LeakModel model,
                                      const std::vector<std::size_t> &schedule);

} // namespace detail

} // namespace voltscope
