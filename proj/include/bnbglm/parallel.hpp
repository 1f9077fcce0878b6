#pragma once

// Column-parallel helper. Work items are split into contiguous ranges that
// depend only on (count, workers); every item is processed by exactly one
// worker and writes to its own output slots, so results are identical for any
// worker count.

#include <functional>
#include <thread>
#include <vector>

namespace bnbglm {

template <class Fn>
void parallel_for(int count, int workers, Fn&& fn) {
  if (count <= 0) return;
  if (workers <= 1 || count == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  const int used = std::min(workers, count);
  std::vector<std::thread> pool;
  pool.reserve(used - 1);
  auto run_range = [&fn](int lo, int hi) {
    for (int i = lo; i < hi; ++i) fn(i);
  };
  for (int w = 1; w < used; ++w) {
    const int lo = static_cast<int>(static_cast<long long>(count) * w / used);
    const int hi =
        static_cast<int>(static_cast<long long>(count) * (w + 1) / used);
    pool.emplace_back(run_range, lo, hi);
  }
  run_range(0, static_cast<int>(static_cast<long long>(count) / used));
  for (auto& t : pool) t.join();
}

}  // namespace bnbglm
