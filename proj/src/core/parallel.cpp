#include "vtg/core/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace vtg {
namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int threads) { g_threads.store(std::max(1, threads)); }

int num_threads() noexcept { return g_threads.load(); }

void parallel_for(int64_t count, const std::function<void(int64_t, int64_t)>& fn, int64_t min_chunk) {
  if (count <= 0) return;
  const int64_t workers = std::min<int64_t>(num_threads(), std::max<int64_t>(1, count / std::max<int64_t>(1, min_chunk)));
  if (workers <= 1) {
    fn(0, count);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers - 1));
  const int64_t chunk = (count + workers - 1) / workers;
  for (int64_t w = 1; w < workers; ++w) {
    const int64_t begin = w * chunk;
    const int64_t end = std::min(count, begin + chunk);
    if (begin < end) pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  fn(0, std::min(count, chunk));
  for (auto& t : pool) t.join();
}

}  // namespace vtg
