#pragma once

#include <cstddef>
#include <functional>

namespace mos {

/// Number of worker threads to use: min(MOS_THREADS, hardware concurrency),
/// defaulting to all cores when the variable is unset.
int worker_count();

/**
 * Run fn(i) for i in [0, n), split across worker threads in fixed contiguous
 * chunks. Each index is processed wholly by one thread, so any per-index
 * sequential reduction gives results independent of the worker count. Runs
 * inline when a single worker suffices.
 */
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &fn);

/// Chunked variant: fn(begin, end) per worker; same fixed partitioning.
void parallel_for_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)> &fn);

} // namespace mos
