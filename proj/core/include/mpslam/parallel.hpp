#pragma once
// Deterministic chunked parallel-for.
//
// Thread count comes from the MPC_SLAM_THREADS environment variable (unset or
// 0 -> hardware concurrency). Callers must make any reduction order-invariant
// (e.g. per-chunk partial results merged in chunk order) so results do not
// depend on the thread count.

#include <cstddef>
#include <functional>

namespace mpslam {

// Number of worker threads the pipeline may use.
int thread_count();

// Runs fn(begin, end) over disjoint ordered chunks covering [0, n).
// Chunk boundaries depend only on n and the thread count; with one thread the
// call degenerates to fn(0, n) on the calling thread.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace mpslam
