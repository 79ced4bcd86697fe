#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "floe/error.hpp"
#include "floe/parallel.hpp"

namespace floe {

/// k nearest neighbors per point, row-major n x k, distances ascending.
struct KnnResult {
  std::size_t n = 0, k = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> distances;

  const std::uint32_t* neighbor_row(std::size_t i) const { return indices.data() + i * k; }
  const double* distance_row(std::size_t i) const { return distances.data() + i * k; }
};

/// Exact brute-force Euclidean kNN. For every point the k nearest other
/// points, sorted by ascending distance with ties broken toward the lower
/// index. This is the pipeline's documented hot spot; queries run in
/// parallel.
inline KnnResult knn_exact(const double* points, std::size_t n, std::size_t dim, std::size_t k) {
  if (n <= k) throw DataError("knn_exact: need more points than neighbors");
  if (k < 1) throw ConfigError("knn_exact: k must be at least 1");

  KnnResult res;
  res.n = n;
  res.k = k;
  res.indices.resize(n * k);
  res.distances.resize(n * k);

  parallel_for(n, [&](std::size_t i) {
    const double* pi = points + i * dim;
    // max-heap of the current best k, ordered by (distance^2, index)
    std::vector<std::pair<double, std::uint32_t>> heap;
    heap.reserve(k + 1);
    auto cmp = [](const auto& a, const auto& b) { return a < b; };
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* pj = points + j * dim;
      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = pi[c] - pj[c];
        d2 += d * d;
      }
      const std::pair<double, std::uint32_t> cand{d2, static_cast<std::uint32_t>(j)};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), cmp);
      } else if (cand < heap.front()) {
        std::pop_heap(heap.begin(), heap.end(), cmp);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), cmp);
      }
    }
    std::sort_heap(heap.begin(), heap.end(), cmp);
    for (std::size_t j = 0; j < k; ++j) {
      res.indices[i * k + j] = heap[j].second;
      res.distances[i * k + j] = std::sqrt(heap[j].first);
    }
  });
  return res;
}

} // namespace floe
