#include "certiformer/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace certiformer::par {

namespace {
int g_threads = 1;
}

void set_threads(int n) {
    g_threads = n < 1 ? 1 : n;
#ifdef _OPENMP
    omp_set_num_threads(g_threads);
#endif
}

int threads() { return g_threads; }

void for_each(int n, const std::function<void(int)>& f) {
#ifdef _OPENMP
    if (g_threads > 1 && n > 1) {
#pragma omp parallel for schedule(static)
        for (int i = 0; i < n; ++i) f(i);
        return;
    }
#endif
    for (int i = 0; i < n; ++i) f(i);
}

}  // namespace certiformer::par
