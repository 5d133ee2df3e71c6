#include "voltscope/parallel.hpp"

#include <atomic>
#include <cstdlib>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace voltscope {

namespace {
std::atomic<int> g_cap{0};
}

void set_worker_cap(int cap) { g_cap.store(cap > 0 ? cap : 0); }

int worker_count() {
    // An explicit cap is honored even above the hardware count;
    // oversubscription only costs speed, never changes results.
    int cap = g_cap.load();
    if (cap <= 0) {
        if (const char *env = std::getenv("VOLTSCOPE_THREADS"))
            cap = std::atoi(env);
    }
    if (cap > 0)
        return cap;
#ifdef _OPENMP
    const int hw = omp_get_max_threads();
    return hw < 1 ? 1 : hw;
#else
    return 1;
#endif
}

} // namespace voltscope
