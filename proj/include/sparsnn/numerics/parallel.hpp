#pragma once

#include <cstddef>
#include <functional>

namespace sparsnn {

// Worker count from SPARSNN_THREADS (default 1, the reference mode).
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Splits [0, n) into contiguous chunks, one per worker, and calls
// fn(chunk_index, begin, end). Chunk boundaries depend only on n and the
// worker count, so per-chunk reductions merged in chunk order are
// deterministic for a fixed thread count.
void parallel_chunks(std::size_t n, const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

std::size_t chunk_count(std::size_t n);

}  // namespace sparsnn
