#pragma once

// Process-level tuning for the allocation pattern of tape ops: many
// short-lived buffers of a few MB each.

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace amicable {

// Keeps large blocks in the heap instead of returning them to the OS after
// every op. Without this, each iteration pays page faults on fresh mappings.
// Call once at program start; a no-op outside glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 512 * 1024 * 1024);
#endif
}

}  // namespace amicable
