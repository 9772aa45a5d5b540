#pragma once

#include <cstddef>
#include <functional>

namespace topseg::numkit {

// Worker count for parallel_for. 0 picks hardware concurrency. The setting
// is process-global; the CLI wires --threads / TOPSEG_THREADS to it.
void set_thread_count(unsigned n);
unsigned thread_count();

// Runs fn(0..n-1), possibly concurrently. Each call must touch only its
// own output slot, which keeps results identical for any worker count.
// The first exception thrown by any call is rethrown after all finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace topseg::numkit
