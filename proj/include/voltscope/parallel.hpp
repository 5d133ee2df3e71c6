#pragma once

#include <cstddef>

namespace voltscope {

// Worker count used by every OpenMP region. Resolution order: programmatic
// cap (set_worker_cap), then VOLTSCOPE_THREADS, then the hardware count.
// Kernels are written so results are bitwise identical for any value.
int worker_count();

// cap <= 0 restores automatic selection.
void set_worker_cap(int cap);

// Trace-block granularity for deterministic reductions: partial sums are
// accumulated per fixed-size block and combined in block order, so the
// result does not depend on how blocks were scheduled over threads.
inline constexpr std::size_t kReduceBlock = 4096;

inline std::size_t block_count(std::size_t n) {
    return (n + kReduceBlock - 1) / kReduceBlock;
}

} // namespace voltscope
