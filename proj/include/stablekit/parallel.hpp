#pragma once

#include <cstdlib>
#include <functional>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace stablekit {

/// Global thread count; 0 means "use OpenMP default".
/// Resolved once from STABLEKIT_THREADS unless set_threads() was called.
int thread_count();
void set_threads(int n);

/// Static-schedule parallel loop over [0, n).  Work items must write only to
/// their own index so the result is independent of the thread count.
template <typename F>
void parallel_for(long n, F&& fn) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) fn(i);
#else
    for (long i = 0; i < n; ++i) fn(i);
#endif
}

template <typename F>
void serial_for(long n, F&& fn) {
    for (long i = 0; i < n; ++i) fn(i);
}

inline int detail_resolve_threads() {
#ifdef _OPENMP
    if (const char* env = std::getenv("STABLEKIT_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) {
            omp_set_num_threads(v);
            return v;
        }
    }
    return 0;
#else
    return 1;
#endif
}

inline int& detail_thread_slot() {
    static int n = -1;
    return n;
}

inline int thread_count_impl() {
    int& slot = detail_thread_slot();
    if (slot < 0) slot = detail_resolve_threads();
    return slot;
}

inline int thread_count() {
#ifdef _OPENMP
    const int n = thread_count_impl();
    return n > 0 ? n : omp_get_max_threads();
#else
    return 1;
#endif
}

inline void set_threads(int n) {
    detail_thread_slot() = n;
#ifdef _OPENMP
    if (n > 0) omp_set_num_threads(n);
#endif
}

} // namespace stablekit
