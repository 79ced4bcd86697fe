#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/knn.hpp"
#include "floe/parallel.hpp"
#include "floe/rng.hpp"

namespace floe {

struct UmapConfig {
  std::size_t n_neighbors = 50;
  double min_dist = 0.0001;
  double spread = 1.0;
  std::size_t n_components = 2;
  int n_epochs = -1; // auto: 500 when N <= 10000, else 200
  double negative_sample_rate = 5.0;
  double initial_learning_rate = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_neighbors < 2) throw ConfigError("umap: n_neighbors must be at least 2");
    if (!(min_dist < spread)) throw ConfigError("umap: min_dist must be below spread");
    if (!(min_dist > 0)) throw ConfigError("umap: min_dist must be positive");
    if (n_components < 1) throw ConfigError("umap: n_components must be positive");
  }
};

/// Symmetric fuzzy graph: every undirected edge is stored in both
/// directions, weights in (0, 1], no self edges, plus the per-point
/// calibration (rho = nearest positive distance, sigma = kernel bandwidth).
struct FuzzyGraph {
  std::size_t n = 0;
  struct Edge {
    std::uint32_t i, j;
    double weight;
  };
  std::vector<Edge> edges; // sorted by (i, j)
  std::vector<double> rho;
  std::vector<double> sigma;
};

struct SmoothKnn {
  double rho = 0.0;
  double sigma = 0.0;
  bool clamped = false; // sigma hit a bracket edge
};

inline constexpr double kSmoothKnnSigmaLo = 1e-8;
inline constexpr double kSmoothKnnSigmaHi = 1e4;
inline constexpr int kSmoothKnnIters = 64;

/// Per-point smooth-kNN calibration: rho is the smallest positive neighbor
/// distance and sigma solves sum_j exp(-max(0, d_j - rho)/sigma) = log2(k)
/// by 64 bisection steps on [1e-8, 1e4], clamping to the bracket edge when
/// the target is unattainable.
inline SmoothKnn smooth_knn(std::span<const double> distances) {
  const std::size_t k = distances.size();
  if (k < 2) throw DataError("smooth_knn: need at least 2 neighbor distances");

  SmoothKnn out;
  out.rho = 0.0;
  for (double d : distances)
    if (d > 0.0) {
      out.rho = d;
      break;
    }

  const double target = std::log2(static_cast<double>(k));
  auto weight_sum = [&](double sigma) {
    double s = 0.0;
    for (double d : distances) s += std::exp(-std::max(0.0, d - out.rho) / sigma);
    return s;
  };

  double lo = kSmoothKnnSigmaLo, hi = kSmoothKnnSigmaHi;
  // the sum is increasing in sigma; clamp when the target lies outside
  if (weight_sum(lo) >= target) {
    out.sigma = lo;
    out.clamped = true;
    return out;
  }
  if (weight_sum(hi) <= target) {
    out.sigma = hi;
    out.clamped = true;
    return out;
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < kSmoothKnnIters; ++it) {
    mid = 0.5 * (lo + hi);
    if (weight_sum(mid) > target)
      hi = mid;
    else
      lo = mid;
  }
  out.sigma = mid;
  return out;
}

// probabilistic t-conorm used by the fuzzy set union
inline double fuzzy_union_weight(double a, double b) { return a + b - a * b; }

/// Fuzzy set union of the directed membership weights
/// w_ij = exp(-max(0, d_ij - rho_i)/sigma_i): the symmetric weight is
/// a + b - a*b with the missing direction treated as 0.
inline FuzzyGraph fuzzy_graph(const KnnResult& knn) {
  FuzzyGraph g;
  g.n = knn.n;
  g.rho.resize(knn.n);
  g.sigma.resize(knn.n);

  parallel_for(knn.n, [&](std::size_t i) {
    const auto s = smooth_knn(std::span<const double>(knn.distance_row(i), knn.k));
    g.rho[i] = s.rho;
    g.sigma[i] = s.sigma;
  });

  // directed weights in CSR-like layout (neighbors sorted by index per row)
  struct Directed {
    std::uint32_t j;
    double w;
  };
  std::vector<std::vector<Directed>> directed(knn.n);
  parallel_for(knn.n, [&](std::size_t i) {
    auto& row = directed[i];
    row.resize(knn.k);
    for (std::size_t q = 0; q < knn.k; ++q) {
      const double d = knn.distances[i * knn.k + q];
      row[q].j = knn.indices[i * knn.k + q];
      row[q].w = std::exp(-std::max(0.0, d - g.rho[i]) / g.sigma[i]);
    }
    std::sort(row.begin(), row.end(), [](const Directed& a, const Directed& b) { return a.j < b.j; });
  });

  auto directed_weight = [&](std::uint32_t from, std::uint32_t to) -> double {
    const auto& row = directed[from];
    auto it = std::lower_bound(row.begin(), row.end(), to,
                               [](const Directed& d, std::uint32_t v) { return d.j < v; });
    if (it != row.end() && it->j == to) return it->w;
    return 0.0;
  };

  for (std::uint32_t i = 0; i < knn.n; ++i) {
    for (const auto& d : directed[i]) {
      if (d.j < i) continue; // handled from the lower-index side
      const double w = fuzzy_union_weight(d.w, directed_weight(d.j, i));
      if (w <= 0.0) continue;
      g.edges.push_back({i, d.j, w});
      g.edges.push_back({d.j, i, w});
    }
  }
  // lower-index rows may also reference higher rows only via the reverse
  // direction; pick those up from the higher side
  for (std::uint32_t i = 0; i < knn.n; ++i) {
    for (const auto& d : directed[i]) {
      if (d.j >= i) continue;
      if (directed_weight(d.j, i) > 0.0) continue; // already emitted above
      const double w = d.w; // union with the absent direction
      g.edges.push_back({i, d.j, w});
      g.edges.push_back({d.j, i, w});
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const FuzzyGraph::Edge& a, const FuzzyGraph::Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  return g;
}

/// Least-squares fit of the low-dimensional kernel 1/(1 + a d^(2b)) to the
/// target curve (1 for d <= min_dist, exp(-(d - min_dist)/spread) beyond)
/// over 300 points on (0, 3*spread]. Levenberg-Marquardt with analytic
/// Jacobian; returns (a, b) and reports the RMS residual through *rms.
inline std::pair<double, double> fit_ab(double min_dist, double spread, double* rms = nullptr) {
  if (!(min_dist > 0) || !(min_dist < spread)) throw ConfigError("fit_ab: need 0 < min_dist < spread");

  constexpr int kGrid = 300;
  std::vector<double> xs(kGrid), ys(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    const double d = (static_cast<double>(i + 1) / kGrid) * 3.0 * spread;
    xs[i] = d;
    ys[i] = d <= min_dist ? 1.0 : std::exp(-(d - min_dist) / spread);
  }

  double a = 1.0, b = 1.0;
  auto sse = [&](double pa, double pb) {
    double s = 0.0;
    for (int i = 0; i < kGrid; ++i) {
      const double r = 1.0 / (1.0 + pa * std::pow(xs[i], 2.0 * pb)) - ys[i];
      s += r * r;
    }
    return s;
  };

  double lambda = 1e-3;
  double err = sse(a, b);
  for (int iter = 0; iter < 200; ++iter) {
    double jtj[3] = {0, 0, 0}; // [aa, ab, bb]
    double jtr[2] = {0, 0};
    for (int i = 0; i < kGrid; ++i) {
      const double p = std::pow(xs[i], 2.0 * b);
      const double denom = 1.0 + a * p;
      const double f = 1.0 / denom;
      const double r = f - ys[i];
      const double dfda = -p / (denom * denom);
      const double dfdb = -2.0 * a * p * std::log(xs[i]) / (denom * denom);
      jtj[0] += dfda * dfda;
      jtj[1] += dfda * dfdb;
      jtj[2] += dfdb * dfdb;
      jtr[0] += dfda * r;
      jtr[1] += dfdb * r;
    }
    bool stepped = false;
    for (int tries = 0; tries < 32; ++tries) {
      const double m00 = jtj[0] * (1.0 + lambda), m11 = jtj[2] * (1.0 + lambda), m01 = jtj[1];
      const double det = m00 * m11 - m01 * m01;
      if (det == 0.0 || !std::isfinite(det)) {
        lambda *= 10.0;
        continue;
      }
      const double da = (-jtr[0] * m11 + jtr[1] * m01) / det;
      const double db = (jtr[0] * m01 - jtr[1] * m00) / det;
      const double na = a + da, nb = b + db;
      if (na > 0 && nb > 0 && std::isfinite(na) && std::isfinite(nb)) {
        const double nerr = sse(na, nb);
        if (nerr < err) {
          a = na;
          b = nb;
          err = nerr;
          lambda = std::max(lambda * 0.3, 1e-12);
          stepped = true;
          break;
        }
      }
      lambda *= 10.0;
    }
    if (!stepped) break; // converged (no downhill step available)
    if (std::fabs(err) < 1e-30) break;
  }
  if (!std::isfinite(a) || !std::isfinite(b) || a <= 0 || b <= 0)
    throw Error("fit_ab: fit diverged, residual " + fmt_double(std::sqrt(err / kGrid)));
  if (rms) *rms = std::sqrt(err / kGrid);
  return {a, b};
}

struct Layout {
  std::size_t n = 0;
  std::vector<double> xy; // row-major n x n_components
};

enum class LayoutInit : std::uint8_t { spectral, random_fallback };

namespace detail {

inline bool graph_connected(const FuzzyGraph& g) {
  if (g.n == 0) return true;
  std::vector<std::uint32_t> parent(g.n);
  std::iota(parent.begin(), parent.end(), 0u);
  std::function<std::uint32_t(std::uint32_t)> find = [&](std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& e : g.edges) {
    const auto a = find(e.i), b = find(e.j);
    if (a != b) parent[a] = b;
  }
  const auto root = find(0);
  for (std::uint32_t i = 1; i < g.n; ++i)
    if (find(i) != root) return false;
  return true;
}

// Two non-trivial leading eigenvectors of the normalized adjacency
// D^-1/2 W D^-1/2 via block power iteration with deflation against the
// known top eigenvector D^1/2 * 1. Returns false when the iteration fails
// to converge.
inline bool spectral_coords(const FuzzyGraph& g, std::size_t ncomp, std::uint64_t seed,
                            std::vector<double>& coords) {
  const std::size_t n = g.n;
  std::vector<double> degree(n, 0.0);
  for (const auto& e : g.edges) degree[e.i] += e.weight;
  for (double d : degree)
    if (d <= 0.0) return false;

  std::vector<double> inv_sqrt_deg(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(degree[i]);

  // top eigenvector of the normalized adjacency, unit norm
  std::vector<double> top(n);
  double top_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    top[i] = std::sqrt(degree[i]);
    top_norm += top[i] * top[i];
  }
  top_norm = std::sqrt(top_norm);
  for (auto& v : top) v /= top_norm;

  Rng rng(seed);
  std::vector<std::vector<double>> vec(ncomp, std::vector<double>(n));
  for (auto& v : vec)
    for (auto& x : v) x = rng.uniform(-1.0, 1.0);

  auto orthonormalize = [&](std::vector<std::vector<double>>& basis) {
    for (std::size_t q = 0; q < basis.size(); ++q) {
      auto& v = basis[q];
      double dot_top = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot_top += v[i] * top[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= dot_top * top[i];
      for (std::size_t p = 0; p < q; ++p) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += v[i] * basis[p][i];
        for (std::size_t i = 0; i < n; ++i) v[i] -= dot * basis[p][i];
      }
      double norm = 0.0;
      for (double x : v) norm += x * x;
      norm = std::sqrt(norm);
      if (norm < 1e-12) return false;
      for (auto& x : v) x /= norm;
    }
    return true;
  };
  if (!orthonormalize(vec)) return false;

  // iterate v <- (I + A)/2 v; spectrum maps to [0, 1] so the leading
  // non-deflated directions dominate
  std::vector<double> next(n);
  std::vector<std::vector<double>> prev = vec;
  double resid = 1.0;
  for (int iter = 0; iter < 600 && resid > 1e-10; ++iter) {
    for (auto& v : vec) {
      std::fill(next.begin(), next.end(), 0.0);
      for (const auto& e : g.edges)
        next[e.i] += e.weight * inv_sqrt_deg[e.i] * inv_sqrt_deg[e.j] * v[e.j];
      for (std::size_t i = 0; i < n; ++i) v[i] = 0.5 * (v[i] + next[i]);
    }
    if (!orthonormalize(vec)) return false;
    if (iter % 8 == 7) {
      resid = 0.0;
      for (std::size_t q = 0; q < ncomp; ++q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += vec[q][i] * prev[q][i];
        resid = std::max(resid, 1.0 - std::fabs(dot));
      }
      prev = vec;
    }
  }
  if (resid > 1e-6) return false;

  coords.resize(n * ncomp);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < ncomp; ++q) coords[i * ncomp + q] = vec[q][i];
  return true;
}

} // namespace detail

/// Negative-sampling SGD layout following the reference UMAP scheme:
/// edges fire on an epochs-per-sample schedule proportional to weight, the
/// attractive gradient moves both endpoints, each attractive update is paired
/// with `negative_sample_rate` random repulsive updates of the head only,
/// per-coordinate gradient terms are clipped to [-4, 4], and the learning
/// rate decays linearly to zero. Updates run sequentially in a fixed order
/// so layouts are exactly reproducible.
inline Layout optimize_layout(const FuzzyGraph& graph, double a, double b, const UmapConfig& cfg,
                              LayoutInit* init_used = nullptr) {
  cfg.validate();
  const std::size_t n = graph.n;
  const std::size_t dim = cfg.n_components;

  Layout layout;
  layout.n = n;
  layout.xy.resize(n * dim);

  LayoutInit init = LayoutInit::random_fallback;
  std::vector<double> coords;
  if (n > 1 && detail::graph_connected(graph) &&
      detail::spectral_coords(graph, dim, derive_seed(cfg.seed, 11), coords)) {
    init = LayoutInit::spectral;
    double max_abs = 0.0;
    for (double v : coords) max_abs = std::max(max_abs, std::fabs(v));
    const double expansion = max_abs > 0 ? 10.0 / max_abs : 1.0;
    Rng noise(derive_seed(cfg.seed, 12));
    for (std::size_t i = 0; i < coords.size(); ++i)
      layout.xy[i] = coords[i] * expansion + noise.uniform(-1e-4, 1e-4);
  } else {
    Rng rng(derive_seed(cfg.seed, 13));
    for (auto& v : layout.xy) v = rng.uniform(-10.0, 10.0);
  }
  if (init_used) *init_used = init;
  if (n <= 1 || graph.edges.empty()) return layout;

  const int n_epochs = cfg.n_epochs > 0 ? cfg.n_epochs : (n <= 10000 ? 500 : 200);

  double max_w = 0.0;
  for (const auto& e : graph.edges) max_w = std::max(max_w, e.weight);
  const std::size_t m = graph.edges.size();
  std::vector<double> epochs_per_sample(m), next_sample(m), eps_neg(m), next_neg(m);
  for (std::size_t e = 0; e < m; ++e) {
    epochs_per_sample[e] = max_w / graph.edges[e].weight;
    next_sample[e] = epochs_per_sample[e];
    eps_neg[e] = epochs_per_sample[e] / cfg.negative_sample_rate;
    next_neg[e] = eps_neg[e];
  }

  Rng neg_rng(derive_seed(cfg.seed, 14));
  auto clip4 = [](double v) { return v > 4.0 ? 4.0 : (v < -4.0 ? -4.0 : v); };

  for (int epoch = 0; epoch < n_epochs; ++epoch) {
    const double alpha =
        cfg.initial_learning_rate * (1.0 - static_cast<double>(epoch) / static_cast<double>(n_epochs));
    for (std::size_t e = 0; e < m; ++e) {
      if (next_sample[e] > static_cast<double>(epoch)) continue;
      const std::uint32_t hi = graph.edges[e].i;
      const std::uint32_t ti = graph.edges[e].j;
      double* head = layout.xy.data() + hi * dim;
      double* tail = layout.xy.data() + ti * dim;

      double d2 = 0.0;
      for (std::size_t c = 0; c < dim; ++c) {
        const double d = head[c] - tail[c];
        d2 += d * d;
      }
      if (d2 > 0.0) {
        const double coeff = (-2.0 * a * b * std::pow(d2, b - 1.0)) / (a * std::pow(d2, b) + 1.0);
        for (std::size_t c = 0; c < dim; ++c) {
          const double gr = clip4(coeff * (head[c] - tail[c]));
          head[c] += alpha * gr;
          tail[c] -= alpha * gr;
        }
      }
      next_sample[e] += epochs_per_sample[e];

      const int n_negative = std::max(
          0, static_cast<int>((static_cast<double>(epoch) - next_neg[e]) / eps_neg[e]));
      for (int s = 0; s < n_negative; ++s) {
        const std::uint32_t other_i = static_cast<std::uint32_t>(neg_rng.below(n));
        if (other_i == hi) continue;
        const double* other = layout.xy.data() + other_i * dim;
        double nd2 = 0.0;
        for (std::size_t c = 0; c < dim; ++c) {
          const double d = head[c] - other[c];
          nd2 += d * d;
        }
        if (nd2 > 0.0) {
          const double coeff = (2.0 * b) / ((0.001 + nd2) * (a * std::pow(nd2, b) + 1.0));
          for (std::size_t c = 0; c < dim; ++c)
            head[c] += alpha * clip4(coeff * (head[c] - other[c]));
        } else {
          for (std::size_t c = 0; c < dim; ++c) head[c] += alpha * 4.0;
        }
      }
      next_neg[e] += n_negative * eps_neg[e];
    }
    for (double v : layout.xy)
      if (!std::isfinite(v))
        throw Error("optimize_layout: non-finite coordinates at epoch " + std::to_string(epoch));
  }
  return layout;
}

struct UmapModel {
  UmapConfig config;
  FuzzyGraph graph;
  double a = 0.0, b = 0.0;
  double fit_rms = 0.0;
  Layout layout;
  LayoutInit init_used = LayoutInit::spectral;
};

/// Full UMAP: exact kNN graph, smooth-kNN calibration, fuzzy union, curve
/// fit and SGD layout. Works for any input dimension (16-wide embeddings or
/// 44-wide flattened raw sequences alike).
inline UmapModel umap_fit(const double* points, std::size_t n, std::size_t dim,
                          const UmapConfig& cfg) {
  cfg.validate();
  if (n <= cfg.n_neighbors)
    throw DataError("umap_fit: need more points than n_neighbors");

  UmapModel model;
  model.config = cfg;
  const KnnResult knn = knn_exact(points, n, dim, cfg.n_neighbors);
  model.graph = fuzzy_graph(knn);
  auto ab = fit_ab(cfg.min_dist, cfg.spread, &model.fit_rms);
  model.a = ab.first;
  model.b = ab.second;
  model.layout = optimize_layout(model.graph, model.a, model.b, cfg, &model.init_used);
  return model;
}

/// Uniform subsample without replacement; returned indices are sorted so
/// downstream iteration order is stable.
inline std::vector<std::size_t> subsample_indices(std::size_t n_total, std::size_t n,
                                                  std::uint64_t seed) {
  if (n > n_total) throw DataError("subsample: sample larger than population");
  std::vector<std::size_t> pool(n_total);
  std::iota(pool.begin(), pool.end(), 0);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n_total - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);
  std::sort(pool.begin(), pool.end());
  return pool;
}

// ---- layout CSV ----

struct LayoutTable {
  std::vector<std::size_t> sample_index;
  std::vector<double> x, y;
  std::vector<std::string> source_tag;
};

inline void write_layout_csv(const std::filesystem::path& path, const Layout& layout,
                             const std::string& source_tag,
                             const std::vector<std::size_t>* sample_indices = nullptr) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "sample_index,x,y,source_tag\n";
  for (std::size_t i = 0; i < layout.n; ++i) {
    const std::size_t si = sample_indices ? (*sample_indices)[i] : i;
    os << si << ',' << fmt_double(layout.xy[i * 2]) << ',' << fmt_double(layout.xy[i * 2 + 1]) << ','
       << source_tag << '\n';
  }
}

inline LayoutTable read_layout_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open layout file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty layout file: " + path.string());
  LayoutTable t;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = split_csv_line(line);
    if (f.size() < 3) throw DataError("layout file: bad row in " + path.string());
    double x, y;
    if (!parse_double(f[1], x) || !parse_double(f[2], y))
      throw DataError("layout file: bad coordinates in " + path.string());
    t.sample_index.push_back(static_cast<std::size_t>(std::strtoull(f[0].c_str(), nullptr, 10)));
    t.x.push_back(x);
    t.y.push_back(y);
    t.source_tag.push_back(f.size() > 3 ? trim(f[3]) : "");
  }
  return t;
}

} // namespace floe
