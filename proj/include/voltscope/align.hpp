#pragma once

// Dynamic time warping and elastic alignment. Exact DTW uses the full
// P x Q cost matrix of squared per-sample differences with step pattern
// {(1,0),(0,1),(1,1)}; the approximate mode coarsens both traces by two,
// solves recursively, and refines inside a window of the projected path
// (the fastdtw scheme).

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "voltscope/trace.hpp"

namespace voltscope {

struct WarpPath {
    // (target index, reference index), from (0,0) to (P-1, Q-1).
    std::vector<std::pair<std::size_t, std::size_t>> pairs;

    // Throws std::invalid_argument unless the path starts at (0,0), ends
    // at (target_len-1, reference_len-1) and moves by unit steps.
    void validate(std::size_t target_len, std::size_t reference_len) const;
};

struct DtwResult {
    WarpPath path;
    double cost = 0.0;
};

// Exact DTW when radius is absent; fastdtw-style approximation otherwise.
// An absent radius on inputs whose cost matrix would exceed the cell cap
// falls back to the approximate mode (radius 16) with a warning on stderr.
DtwResult dtw(const std::vector<float> &target,
              const std::vector<float> &reference,
              std::optional<int> radius = std::nullopt);

// Cell budget for materializing the exact cost matrix.
std::size_t dtw_cell_cap();
void set_dtw_cell_cap(std::size_t cells);

// Warp the target onto the reference's time axis: output has the
// reference's length, each position holding the mean of the target
// samples mapped there; a single target sample mapped to several
// reference positions is duplicated.
std::vector<float> elastic_align(const std::vector<float> &target,
                                 const std::vector<float> &reference,
                                 const WarpPath &path);

// Align every trace of the set to one shared reference trace.
TraceSet align_set(const TraceSet &set, std::size_t reference_index,
                   std::optional<int> radius = std::nullopt);

} // namespace voltscope
