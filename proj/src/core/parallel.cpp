#include "erfseg/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace erfseg {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int n) { g_threads.store(std::max(1, n)); }

int num_threads() { return g_threads.load(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(num_threads()), n);
  if (workers <= 1) {
    if (n) fn(0, n);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (std::size_t w = 1; w < workers; ++w) {
    const std::size_t b = w * chunk;
    const std::size_t e = std::min(n, b + chunk);
    if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  fn(0, std::min(n, chunk));
}

}  // namespace erfseg
