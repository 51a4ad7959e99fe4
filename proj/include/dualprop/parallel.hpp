#pragma once

#include <cstddef>
#include <functional>

namespace dualprop {

// Worker count used by parallel_for. Defaults to DUALPROP_THREADS if set,
// otherwise 1. Values < 1 are clamped to 1.
int thread_count();
void set_thread_count(int n);

// Runs body(i) for i in [begin, end). The range is split into contiguous
// chunks, one per worker; every index is written by exactly one worker so
// results do not depend on the thread count as long as body(i) only writes
// output slot i.
void parallel_for(std::ptrdiff_t begin, std::ptrdiff_t end,
                  const std::function<void(std::ptrdiff_t)>& body);

}  // namespace dualprop
