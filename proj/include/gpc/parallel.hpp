#pragma once

#include <cstddef>
#include <functional>

namespace gpc {

/// Cap on worker threads used inside library calls; 0 restores the default (all cores).
void set_max_threads(unsigned n) noexcept;
unsigned max_threads() noexcept;

/// Splits [0, n) into contiguous chunks and runs fn(begin, end) on each.
/// Chunks never share output rows, so per-row reduction order is unchanged
/// by the thread count. Runs inline when n < 2 * min_chunk or one thread is allowed.
void parallel_for(std::size_t n, std::size_t min_chunk, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace gpc
