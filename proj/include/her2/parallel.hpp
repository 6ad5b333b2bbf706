#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>
#include <vector>

namespace her2 {

// Runs fn(i) for i in [0, n) on up to `jobs` threads (the caller included).
// Work items must write to disjoint slots; the first exception is rethrown
// after all workers finish.
template <class Fn>
void parallel_for(int n, int jobs, Fn&& fn) {
  if (n <= 0) return;
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const int count = std::max(1, std::min(jobs, n));
  std::vector<std::thread> pool;
  for (int t = 1; t < count; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// Default worker count: hardware concurrency, at least 1.
inline int default_jobs() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace her2
