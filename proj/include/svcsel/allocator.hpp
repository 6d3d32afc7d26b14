#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace svcsel {

/// Keep freed n x n work matrices in the heap instead of returning them to
/// the OS after every likelihood evaluation. No-op outside glibc.
inline void retain_large_allocations() {
#if defined(__GLIBC__)
  // 32 MiB is the largest threshold glibc accepts on 64-bit targets
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 64 << 20);
#endif
}

}  // namespace svcsel
