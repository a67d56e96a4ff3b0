#pragma once

#include <cstdint>
#include <functional>

namespace vtg {

// Process-wide worker count; 1 means fully serial.
void set_num_threads(int threads);
int num_threads() noexcept;

// Calls fn(begin, end) over a static partition of [0, count). Partitions are
// contiguous and fixed for a given (count, threads) pair.
void parallel_for(int64_t count, const std::function<void(int64_t, int64_t)>& fn, int64_t min_chunk = 1);

}  // namespace vtg
