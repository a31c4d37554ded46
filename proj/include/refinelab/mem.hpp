#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace refinelab {

// Training and batched inference cycle multi-megabyte scratch buffers every
// step; glibc serves those from fresh mmaps by default, which costs page
// faults on every pass. Raising the thresholds keeps the blocks in the arena.
// Call once from a process entry point.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
}

}  // namespace refinelab
