#include "caai/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace caai {

namespace {

int env_default() {
  if (const char* v = std::getenv("CAAI_THREADS")) {
    const int n = std::atoi(v);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

std::atomic<int> g_override{0};

}  // namespace

int thread_count() {
  const int ovr = g_override.load(std::memory_order_relaxed);
  if (ovr > 0) return ovr;
  static const int def = env_default();
  return def;
}

void set_threads(int n) { g_override.store(n > 0 ? n : 0, std::memory_order_relaxed); }

void parallel_for(std::int64_t begin, std::int64_t end,
                  const std::function<void(std::int64_t)>& fn) {
  const std::int64_t n = end - begin;
  if (n <= 0) return;
  const int workers = std::min<std::int64_t>(thread_count(), n);
  if (workers <= 1 || n < 2) {
    for (std::int64_t i = begin; i < end; ++i) fn(i);
    return;
  }
  const std::int64_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  pool.reserve(workers - 1);
  for (int w = 1; w < workers; ++w) {
    const std::int64_t lo = begin + w * chunk;
    const std::int64_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::int64_t i = lo; i < hi; ++i) fn(i);
    });
  }
  const std::int64_t hi0 = std::min(end, begin + chunk);
  for (std::int64_t i = begin; i < hi0; ++i) fn(i);
  for (auto& t : pool) t.join();
}

}  // namespace caai
