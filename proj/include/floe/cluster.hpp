#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "floe/error.hpp"
#include "floe/rng.hpp"

namespace floe {

struct KmeansResult {
  std::size_t k = 0;
  std::vector<std::uint32_t> assignments; // per point
  std::vector<double> centers;            // row-major k x dim
  double inertia = 0.0;
  std::size_t iterations = 0;
  std::vector<double> inertia_history; // after each assignment step
  bool reseeded = false;               // an empty cluster was re-seeded
};

/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// largest center movement drops below 1e-6 or 300 iterations. Empty
/// clusters are re-seeded to the point farthest from its own center.
inline KmeansResult kmeans(const double* points, std::size_t n, std::size_t dim, std::size_t k,
                           std::uint64_t seed) {
  if (k < 1) throw ConfigError("kmeans: k must be at least 1");
  if (n < k) throw DataError("kmeans: need at least k points");

  auto dist2 = [&](const double* a, const double* b) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = a[c] - b[c];
      s += d * d;
    }
    return s;
  };

  KmeansResult res;
  res.k = k;
  res.centers.resize(k * dim);
  Rng rng(seed);

  // k-means++ seeding
  std::vector<double> best_d2(n, std::numeric_limits<double>::infinity());
  {
    const std::size_t first = static_cast<std::size_t>(rng.below(n));
    std::copy(points + first * dim, points + (first + 1) * dim, res.centers.begin());
    for (std::size_t c = 1; c < k; ++c) {
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d2 = dist2(points + i * dim, res.centers.data() + (c - 1) * dim);
        best_d2[i] = std::min(best_d2[i], d2);
        total += best_d2[i];
      }
      std::size_t chosen = 0;
      if (total > 0.0) {
        const double target = rng.uniform() * total;
        double cum = 0.0;
        chosen = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          cum += best_d2[i];
          if (cum >= target) {
            chosen = i;
            break;
          }
        }
      } else {
        chosen = static_cast<std::size_t>(rng.below(n)); // all duplicates
      }
      std::copy(points + chosen * dim, points + (chosen + 1) * dim,
                res.centers.begin() + static_cast<std::ptrdiff_t>(c * dim));
    }
  }

  res.assignments.assign(n, 0);
  std::vector<double> new_centers(k * dim);
  std::vector<std::size_t> counts(k);

  for (std::size_t iter = 0; iter < 300; ++iter) {
    res.iterations = iter + 1;
    // assignment step, ties toward the lower center index
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t c = 0; c < k; ++c) {
        const double d2 = dist2(points + i * dim, res.centers.data() + c * dim);
        if (d2 < best) {
          best = d2;
          arg = static_cast<std::uint32_t>(c);
        }
      }
      res.assignments[i] = arg;
      inertia += best;
    }
    res.inertia = inertia;
    res.inertia_history.push_back(inertia);

    // update step
    std::fill(new_centers.begin(), new_centers.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint32_t c = res.assignments[i];
      counts[c] += 1;
      for (std::size_t d = 0; d < dim; ++d) new_centers[c * dim + d] += points[i * dim + d];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // re-seed to the point farthest from its current center
        res.reseeded = true;
        double far_d2 = -1.0;
        std::size_t far_i = 0;
        for (std::size_t i = 0; i < n; ++i) {
          const double d2 = dist2(points + i * dim, res.centers.data() + res.assignments[i] * dim);
          if (d2 > far_d2) {
            far_d2 = d2;
            far_i = i;
          }
        }
        std::copy(points + far_i * dim, points + (far_i + 1) * dim,
                  new_centers.begin() + static_cast<std::ptrdiff_t>(c * dim));
        counts[c] = 1;
        // give the stolen point to the new center so the donor cluster mean stays honest
        res.assignments[far_i] = static_cast<std::uint32_t>(c);
      } else {
        for (std::size_t d = 0; d < dim; ++d)
          new_centers[c * dim + d] /= static_cast<double>(counts[c]);
      }
    }

    double max_move2 = 0.0;
    for (std::size_t c = 0; c < k; ++c)
      max_move2 = std::max(max_move2, dist2(new_centers.data() + c * dim, res.centers.data() + c * dim));
    res.centers = new_centers;
    if (std::sqrt(max_move2) < 1e-6) break;
  }

  // final assignment against the converged centers
  double inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::uint32_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double d2 = dist2(points + i * dim, res.centers.data() + c * dim);
      if (d2 < best) {
        best = d2;
        arg = static_cast<std::uint32_t>(c);
      }
    }
    res.assignments[i] = arg;
    inertia += best;
  }
  res.inertia = inertia;
  return res;
}

/// Mean silhouette over all points. Singleton clusters score 0, as does any
/// point where both mean distances vanish (duplicate-point rule).
inline double silhouette(const double* points, std::size_t n, std::size_t dim,
                         const std::vector<std::uint32_t>& assignments) {
  if (assignments.size() != n) throw DataError("silhouette: assignment size mismatch");
  std::uint32_t k = 0;
  for (auto a : assignments) k = std::max(k, a + 1);
  std::vector<std::size_t> sizes(k, 0);
  for (auto a : assignments) sizes[a] += 1;
  std::size_t non_empty = 0;
  for (auto s : sizes)
    if (s > 0) ++non_empty;
  if (non_empty < 2) throw DataError("silhouette: need at least 2 non-empty clusters");

  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0.0;
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = points[a * dim + c] - points[b * dim + c];
      s += d * d;
    }
    return std::sqrt(s);
  };

  double total = 0.0;
  std::vector<double> cluster_sum(k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::uint32_t own = assignments[i];
    if (sizes[own] <= 1) continue; // singleton scores 0
    std::fill(cluster_sum.begin(), cluster_sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cluster_sum[assignments[j]] += dist(i, j);
    }
    const double a = cluster_sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::uint32_t c = 0; c < k; ++c) {
      if (c == own || sizes[c] == 0) continue;
      b = std::min(b, cluster_sum[c] / static_cast<double>(sizes[c]));
    }
    const double m = std::max(a, b);
    total += (m == 0.0) ? 0.0 : (b - a) / m;
  }
  return total / static_cast<double>(n);
}

/// Mean within-cluster pairwise distance divided by the mean distance over
/// all pairs; lower values mean tighter clusters.
inline double compactness_ratio(const double* points, std::size_t n, std::size_t dim,
                                const std::vector<std::uint32_t>& assignments) {
  if (assignments.size() != n) throw DataError("compactness_ratio: assignment size mismatch");
  if (n < 2) throw DataError("compactness_ratio: need at least 2 points");

  double within_sum = 0.0, all_sum = 0.0;
  std::size_t within_pairs = 0, all_pairs = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = points[i * dim + c] - points[j * dim + c];
        s += d * d;
      }
      const double d = std::sqrt(s);
      all_sum += d;
      ++all_pairs;
      if (assignments[i] == assignments[j]) {
        within_sum += d;
        ++within_pairs;
      }
    }
  if (within_pairs == 0) throw DataError("compactness_ratio: no within-cluster pairs");
  if (all_sum == 0.0) throw DataError("compactness_ratio: all points identical");
  const double within_mean = within_sum / static_cast<double>(within_pairs);
  const double all_mean = all_sum / static_cast<double>(all_pairs);
  return within_mean / all_mean;
}

/// Fraction of points whose cluster maps onto their true label under the
/// best greedy cluster-to-label vote (test support for synthetic data).
inline double cluster_purity(const std::vector<std::uint32_t>& assignments,
                             const std::vector<std::uint32_t>& labels) {
  if (assignments.size() != labels.size() || assignments.empty())
    throw DataError("cluster_purity: size mismatch");
  std::uint32_t k = 0, L = 0;
  for (auto a : assignments) k = std::max(k, a + 1);
  for (auto l : labels) L = std::max(L, l + 1);
  std::vector<std::size_t> table(static_cast<std::size_t>(k) * L, 0);
  for (std::size_t i = 0; i < assignments.size(); ++i)
    table[assignments[i] * L + labels[i]] += 1;
  std::size_t correct = 0;
  for (std::uint32_t c = 0; c < k; ++c) {
    std::size_t best = 0;
    for (std::uint32_t l = 0; l < L; ++l) best = std::max(best, table[c * L + l]);
    correct += best;
  }
  return static_cast<double>(correct) / static_cast<double>(assignments.size());
}

} // namespace floe
