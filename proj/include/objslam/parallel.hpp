// Execution policy for the data-parallel kernels.
//
// Every kernel with a Parallel path also has a Serial path computing the same
// result; the serial one is the reference the tests compare against.
#pragma once

#ifdef _OPENMP
#include <omp.h>
#endif

namespace objslam {

enum class Execution { Serial, Parallel };

/// Calls fn(i) for i in [0, n). Iterations must be independent.
template <typename Fn>
void for_each_index(int n, Execution exec, Fn&& fn) {
  if (exec == Execution::Parallel) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
    for (int i = 0; i < n; ++i) fn(i);
  } else {
    for (int i = 0; i < n; ++i) fn(i);
  }
}

inline int hardware_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace objslam
