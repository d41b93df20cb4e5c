#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace kforge {

/// Number of worker threads used when a caller passes 0.
/// Reads KFORGE_THREADS, falling back to the hardware concurrency.
int default_thread_count();

/// Resolves a requested thread count (0 means default) to a value >= 1.
int resolve_threads(int requested);

/// Runs fn(block) for block in [0, n_blocks) on up to `threads` workers.
/// Blocks are claimed dynamically; callers that need reproducible results
/// must write per-block outputs and reduce them in block order afterwards.
void parallel_for_blocks(std::size_t n_blocks, int threads,
                         const std::function<void(std::size_t)>& fn);

/// Fixed-order pairwise (cascade) summation. The reduction tree depends only
/// on the input length, so results are bit-stable across thread counts.
double pairwise_sum(std::span<const double> values);

/// Size of the fixed point blocks used by every cloud reduction.
inline constexpr std::size_t kReductionBlock = 2048;

}  // namespace kforge
