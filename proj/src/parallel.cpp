#include "occlusynth/parallel.hpp"

#include <atomic>
#include <cstdlib>
#include <thread>
#include <vector>

namespace occl {

namespace {
std::atomic<int> g_threads{0};

int env_threads() {
  if (const char* v = std::getenv("OCCLUSYNTH_THREADS")) {
    const int n = std::atoi(v);
    if (n > 0) return n;
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? static_cast<int>(hc) : 1;
}
}  // namespace

int default_threads() {
  int n = g_threads.load(std::memory_order_relaxed);
  if (n <= 0) {
    n = env_threads();
    g_threads.store(n, std::memory_order_relaxed);
  }
  return n;
}

void set_default_threads(int n) { g_threads.store(n > 0 ? n : 0); }

void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn, int threads) {
  if (end <= begin) return;
  const std::size_t n = end - begin;
  int nt = threads > 0 ? threads : default_threads();
  if (static_cast<std::size_t>(nt) > n) nt = static_cast<int>(n);
  if (nt <= 1) {
    for (std::size_t i = begin; i < end; ++i) fn(i);
    return;
  }
  // Static contiguous partition: chunk boundaries depend only on (n, nt),
  // never on scheduling.
  std::vector<std::thread> pool;
  pool.reserve(nt);
  const std::size_t chunk = (n + nt - 1) / nt;
  for (int t = 0; t < nt; ++t) {
    const std::size_t lo = begin + chunk * static_cast<std::size_t>(t);
    const std::size_t hi = std::min(end, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, &fn] {
      for (std::size_t i = lo; i < hi; ++i) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace occl
