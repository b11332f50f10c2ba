#pragma once

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace mrsir {

// Applies the MRSI_RESTORE_THREADS worker cap. Call once at process start;
// harmless without OpenMP.
inline void init_threads() {
#ifdef _OPENMP
  if (const char* env = std::getenv("MRSI_RESTORE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) omp_set_num_threads(n);
  }
#endif
}

inline int worker_count() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

} // namespace mrsir
