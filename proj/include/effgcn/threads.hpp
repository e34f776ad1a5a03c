#pragma once

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace effgcn {

/// The engine allocates and frees multi-megabyte activation buffers at a
/// high rate. Keeping them on the heap instead of returning them to the
/// kernel avoids re-faulting the pages on every operation.
inline const bool allocator_tuned = [] {
#ifdef __GLIBC__
    mallopt(M_MMAP_MAX, 0);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
    return true;
}();

/// Worker budget for internal kernels. Honors EFFGCN_THREADS when set,
/// otherwise uses the hardware default. Parallel loops only ever partition
/// independent output rows, never reduction order, so results are bitwise
/// reproducible for a fixed budget; different budgets may differ in the
/// last bits through kernel blocking.
inline int thread_budget() {
    static const int budget = [] {
#ifdef _OPENMP
        int n = omp_get_max_threads();
#else
        int n = 1;
#endif
        if (const char* env = std::getenv("EFFGCN_THREADS")) {
            const int cap = std::atoi(env);
            if (cap > 0) n = std::min(n, cap);
        }
        return std::max(1, n);
    }();
    return budget;
}

/// Runs fn(i) for i in [0, n) with a static partition across threads.
template <typename Fn>
void parallel_for(std::int64_t n, Fn&& fn) {
#ifdef _OPENMP
    const int threads = thread_budget();
    if (threads > 1 && n > 1) {
#pragma omp parallel for schedule(static) num_threads(threads)
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
#endif
    for (std::int64_t i = 0; i < n; ++i) fn(i);
}

}  // namespace effgcn
