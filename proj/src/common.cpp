#include "physdyn/common.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace physdyn {

int max_threads() {
  static int cached = [] {
    if (const char* env = std::getenv("PHYSDYN_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
  }();
  return cached;
}

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& chunk) {
  if (n <= 0) return;
  int workers = std::min<std::int64_t>(max_threads(), n);
  if (workers <= 1) {
    chunk(0, n);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  std::int64_t per = (n + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    std::int64_t lo = w * per;
    std::int64_t hi = std::min<std::int64_t>(n, lo + per);
    if (lo >= hi) break;
    pool.emplace_back([&chunk, lo, hi] { chunk(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace physdyn
