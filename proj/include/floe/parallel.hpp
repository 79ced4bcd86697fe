#pragma once

#include <atomic>
#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace floe {

// Number of work chunks used by deterministic parallel reductions. Fixed so
// that floating-point reduction order does not depend on the thread count.
inline constexpr std::size_t kReductionChunks = 16;

// Splits [0, n) into nchunks contiguous ranges and runs fn(chunk, begin, end)
// for each, possibly on several threads. The chunk boundaries depend only on
// n and nchunks, never on hardware concurrency.
inline void parallel_chunks(std::size_t n, std::size_t nchunks,
                            const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (n == 0) return;
  if (nchunks > n) nchunks = n;
  const std::size_t base = n / nchunks, extra = n % nchunks;
  std::vector<std::pair<std::size_t, std::size_t>> ranges(nchunks);
  std::size_t pos = 0;
  for (std::size_t c = 0; c < nchunks; ++c) {
    const std::size_t len = base + (c < extra ? 1 : 0);
    ranges[c] = {pos, pos + len};
    pos += len;
  }

  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  const std::size_t nthreads = std::min<std::size_t>(hw, nchunks);
  if (nthreads <= 1) {
    for (std::size_t c = 0; c < nchunks; ++c) fn(c, ranges[c].first, ranges[c].second);
    return;
  }

  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (std::size_t t = 0; t < nthreads; ++t) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t c = next.fetch_add(1);
        if (c >= ranges.size()) break;
        fn(c, ranges[c].first, ranges[c].second);
      }
    });
  }
  for (auto& th : pool) th.join();
}

// Elementwise parallel loop for pure per-index work (disjoint writes).
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  parallel_chunks(n, kReductionChunks, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) fn(i);
  });
}

} // namespace floe
