#pragma once

#include <functional>

namespace certiformer::par {

// Global worker count. 1 (the default) selects the serial reference path;
// anything above enables the OpenMP kernels. Results are bit-identical
// either way: parallel loops only ever split independent output rows, all
// reductions stay inside a row and keep their serial order.
void set_threads(int n);
int threads();

// Runs f(i) for i in [0, n). Uses OpenMP when enabled and n is worth it.
void for_each(int n, const std::function<void(int)>& f);

}  // namespace certiformer::par
