#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace sqg {

/// Process-wide worker count used by the embarrassingly parallel loops (Hölder sup, kernel
/// quadrature, ensembles). Defaults to 1 (serial mode).
inline std::atomic<int>& thread_count() {
  static std::atomic<int> count{1};
  return count;
}

/// Runs body(i) for i in [0, count). Each index writes only its own output slot, so results are
/// identical for any thread count; callers reduce the slots serially afterwards.
template <class Body>
void parallel_for(std::size_t count, Body&& body) {
  const int workers = std::max(1, std::min<int>(thread_count().load(), int(count)));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace sqg
