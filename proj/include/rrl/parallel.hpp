#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

#include <utility>

namespace rrl {

// Two execution lanes for the data-parallel loops: the OpenMP kernels used in
// production and a plain serial reference kept for testing. Every parallel
// site writes per-index results into preallocated slots and reduces in index
// order afterwards, so both lanes produce bit-identical output.
enum class Exec { serial, parallel };

inline int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

template <class F>
void parallel_for(Exec exec, int n, F&& body) {
    if (exec == Exec::parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) body(i);
        return;
#endif
    }
    for (int i = 0; i < n; ++i) body(i);
}

}  // namespace rrl
