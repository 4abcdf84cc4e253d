#pragma once

#include <cstddef>
#include <functional>
#include <span>

namespace wdyn {

// Process-wide worker count used by every parallel loop. Outputs never
// depend on it: work is split into fixed-size items and reductions combine
// per-item partials in item order.
void set_worker_count(std::size_t n);
std::size_t worker_count();

// Calls fn(i) for i in [0, n) on up to worker_count() threads.
// The first exception thrown by any item is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Deterministic pairwise (tree) summation.
double pairwise_sum(std::span<const double> values) noexcept;

// Chunk size (in elements) used for chunked reductions over long arrays.
inline constexpr std::size_t kReduceChunk = 4096;

inline std::size_t chunk_count(std::size_t n) noexcept {
    return (n + kReduceChunk - 1) / kReduceChunk;
}

} // namespace wdyn
