#pragma once

// Countermeasure strength metrics: analytic and empirical SNR for island
// configurations, the misalignment correlation predictor, and
// fixed-vs-random TVLA with batch-style trace construction.

#include <array>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "voltscope/matrix.hpp"
#include "voltscope/synth.hpp"
#include "voltscope/trace.hpp"

namespace voltscope {

struct SnrParams {
    std::size_t n = 2; // islands
    std::size_t m = 2; // independent supplies
    double sigma2_T = 0.0;
    double mu_T = 0.0;
    double sigma2_va = 0.0; // variance of v^alpha over the level draw
    double mu_va = 0.0;

    void validate() const;
};

struct SnrTriple {
    double m_eq_n = 0.0;
    // Absent for odd n: the two-supply split halves the islands.
    std::optional<double> m_eq_2;
    double m_eq_1 = 0.0;
};

// Mean and variance of v^alpha when v is drawn uniformly from the levels.
struct VaMoments {
    double mu = 0.0;
    double sigma2 = 0.0;
};
VaMoments va_moments(const std::vector<double> &levels, double alpha);

// The three identical-moment special cases. All share the numerator
// Var(v^a T) = s2va*s2T + s2va*muT^2 + muva^2*s2T; the denominators
// weight the amplitude term by (n-1), (n/2-1)^2+(n/2)^2, and (n-1)^2.
SnrTriple snr_analytic(const SnrParams &p);

struct IslandMoments {
    double mu_T = 0.0;
    double sigma2_T = 0.0;
    double mu_va = 0.0;
    double sigma2_va = 0.0;
};

// Per-island form: Var of the attacked island (index 0) over the summed
// Var of the rest, all supplies independent. A single island yields
// +infinity.
double snr_general(const std::vector<IslandMoments> &islands);

// Conventional single-island DVS: the exploitable part is the
// mean-amplitude leakage mu_va*T, the noise is the amplitude fluctuation
// (va - mu_va)*T. Follows from the same variance decomposition.
double snr_single_island_dvs(double mu_va, double sigma2_va, double mu_T,
                             double sigma2_T);

// Correlation attenuation by SNR: rho_ap / sqrt(1 + 1/snr).
double attenuated_rho(double rho_ap, double snr);

// Across-trace variance ratio of the retained signal contribution to the
// retained noise contribution, measured at the sample where the mean
// signal contribution peaks. +infinity when the noise variance is zero.
double snr_empirical(const TraceSet &set, const ComposeParts &parts);

// Empirical SNR for captured traces, where no signal/noise decomposition
// is available. Traces are grouped by their first-round model power under
// the known key; the between-group to mean within-group variance ratio is
// taken at its best sample.
double snr_empirical_classed(const TraceSet &set, const Block16 &key);

struct CovarianceCheck {
    double var_sum = 0.0;   // Var(signal + noise) at the peak sample
    double var_parts = 0.0; // Var(signal) + Var(noise)
    double cov_term = 0.0;  // Cov(signal, noise)
    double cov_sigma = 0.0; // bootstrap std-dev of cov_term
};

// Numerical check of Var(A+B) = Var(A) + Var(B) + 2 Cov(A,B) on a
// two-island set with retained contributions; the bootstrap sigma tells
// whether the covariance differs from zero significantly.
CovarianceCheck covariance_decomposition_check(const TraceSet &set,
                                               const ComposeParts &parts,
                                               std::uint64_t seed,
                                               int n_bootstrap = 200);

struct MisalignmentParams {
    double rho_ap = 0.0;
    double p = 0.0; // probability the secret consumes power at attack time
    double var_secret = 0.0;
    double var_total = 0.0;

    void validate() const;
};

// rho = rho_ap * p * sqrt(var_secret / var_total).
double predict_misaligned_rho(const MisalignmentParams &mp);

// Welch's unequal-variance t statistic per sample column.
std::vector<double> welch_t(const Matrix<float> &group_a,
                            const Matrix<float> &group_b);

struct TvlaReport {
    std::vector<double> t_scores_group1;
    std::vector<double> t_scores_group2;
    double threshold = 4.5;
    // Samples where |t| exceeds the threshold in BOTH groups.
    std::size_t fail_sample_count = 0;
    bool pass = true;
    std::size_t normalized_length = 0;
};

// Fixed-vs-random leakage test: both classes are interpolated to the
// common median length, each class is split into seeded halves (ordered
// by a stable content hash first, so trace order cannot change the
// verdict), and Welch t-scores are computed per half.
TvlaReport tvla_fixed_vs_random(const TraceSet &fixed,
                                const TraceSet &random_set, double threshold,
                                std::uint64_t seed);

// Batch-style capture for TVLA: each trace is batch_size consecutive
// encryption pulses under one per-batch voltage draw, with the plaintext
// of interest (fixed or fresh-random) at floor(batch_size/2) and the rest
// random. Returns the fixed-class and random-class sets, ragged across
// voltage draws.
std::pair<TraceSet, TraceSet> make_tvla_batches(
    const SynthPlan &plan, const Block16 &fixed_plaintext,
    int batch_size = 32, std::optional<int> position = std::nullopt);

} // namespace voltscope
