#pragma once

// Straightforward serial implementations of the hot kernels, kept as the
// correctness reference for the production (bucketed / OpenMP) versions
// and as the baseline side of the benchmark target. Two-pass statistics,
// no partitioning tricks.

#include <vector>

#include "voltscope/cpa.hpp"
#include "voltscope/matrix.hpp"
#include "voltscope/trace.hpp"

namespace voltscope::serial {

// Two-pass Pearson: means first, then centered products.
double pearson(const std::vector<double> &x, const std::vector<double> &y);

// Peak |correlation| per guess, looping guesses and samples directly over
// the hypothesis and trace columns.
std::vector<double> correlation_peaks(const TraceSet &set, int byte_index,
                                      LeakModel model);

// Welch t per sample from explicit mean/variance passes.
std::vector<double> welch_t(const Matrix<float> &group_a,
                            const Matrix<float> &group_b);

// Nearest-centroid assignment, one trace at a time.
std::vector<int> kmeans_assign(const Matrix<float> &data,
                               const Matrix<double> &centroids);

} // namespace voltscope::serial
