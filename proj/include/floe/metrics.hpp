#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "floe/autoencoder.hpp"
#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/parallel.hpp"
#include "floe/supersegment.hpp"

namespace floe {

inline double rmse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DataError("rmse: length mismatch");
  if (pred.empty()) throw DataError("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

inline double r2(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DataError("r2: length mismatch");
  if (pred.size() < 2) throw DataError("r2: need at least 2 values");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - truth[i];
    const double d = truth[i] - mean;
    ss_res += r * r;
    ss_tot += d * d;
  }
  if (ss_tot == 0.0) throw DataError("r2: undefined for zero-variance truth");
  return 1.0 - ss_res / ss_tot;
}

struct FeatureMetrics {
  std::array<double, kNumFeatures> rmse{};
  std::array<double, kNumFeatures> r2{};
};

/// Inference-mode reconstruction metrics over a set, reported per feature in
/// de-standardized physical units. The set may arrive raw (standardized here
/// with the model statistics) or already standardized with the same stats.
inline FeatureMetrics evaluate_reconstruction(const Autoencoder& model, const FeatureStats& stats,
                                              const SuperSegmentSet& set) {
  if (set.samples.empty()) throw DataError("evaluate_reconstruction: empty set");
  if (set.standardized() && !(*set.stats == stats))
    throw DataError("evaluate_reconstruction: set standardized with different statistics");

  const SuperSegmentSet* std_set = &set;
  SuperSegmentSet owned;
  if (!set.standardized()) {
    owned = standardize(set, stats);
    std_set = &owned;
  }

  const std::size_t n = std_set->size();
  const std::size_t sample_size = model.config().input_size();
  // per-feature accumulators: sum, sum of squares of truth, residual sq
  struct Acc {
    std::array<double, kNumFeatures> t_sum{}, t_sq{}, res_sq{};
    std::size_t count = 0;
  };
  std::vector<Acc> partial(kReductionChunks);

  parallel_chunks(n, kReductionChunks, [&](std::size_t chunk, std::size_t b, std::size_t e) {
    Autoencoder::Cache cache;
    std::vector<double> recon(sample_size);
    Acc& acc = partial[chunk];
    for (std::size_t i = b; i < e; ++i) {
      const auto& s = std_set->samples[i];
      model.forward(s.values.data(), false, 0, cache, recon.data());
      for (int p = 0; p < kWindowPoints; ++p)
        for (int f = 0; f < kNumFeatures; ++f) {
          const double truth = s.at(p, f) * stats.stddev[f] + stats.mean[f];
          const double pred = recon[p * kNumFeatures + f] * stats.stddev[f] + stats.mean[f];
          const double r = pred - truth;
          acc.t_sum[f] += truth;
          acc.t_sq[f] += truth * truth;
          acc.res_sq[f] += r * r;
        }
      acc.count += 1;
    }
  });

  Acc total;
  for (const auto& p : partial) {
    for (int f = 0; f < kNumFeatures; ++f) {
      total.t_sum[f] += p.t_sum[f];
      total.t_sq[f] += p.t_sq[f];
      total.res_sq[f] += p.res_sq[f];
    }
    total.count += p.count;
  }

  FeatureMetrics out;
  const double count = static_cast<double>(total.count * kWindowPoints);
  for (int f = 0; f < kNumFeatures; ++f) {
    out.rmse[f] = std::sqrt(total.res_sq[f] / count);
    const double mean = total.t_sum[f] / count;
    const double ss_tot = total.t_sq[f] - count * mean * mean;
    if (ss_tot <= 0.0) throw DataError(std::string("r2 undefined for feature '") + feature_name(f) + "'");
    out.r2[f] = 1.0 - total.res_sq[f] / ss_tot;
  }
  return out;
}

inline void write_metrics(const std::filesystem::path& txt_path,
                          const std::filesystem::path& csv_path, const std::string& arch,
                          const FeatureMetrics& m) {
  std::ofstream txt(txt_path, std::ios::trunc);
  if (!txt) throw IoError("cannot open for writing: " + txt_path.string());
  txt << "arch = " << arch << '\n';
  for (int f = 0; f < kNumFeatures; ++f) {
    txt << "rmse." << feature_name(f) << " = " << fmt_double(m.rmse[f]) << '\n';
    txt << "r2." << feature_name(f) << " = " << fmt_double(m.r2[f]) << '\n';
  }
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw IoError("cannot open for writing: " + csv_path.string());
  csv << "feature,rmse,r2\n";
  for (int f = 0; f < kNumFeatures; ++f)
    csv << feature_name(f) << ',' << fmt_double(m.rmse[f]) << ',' << fmt_double(m.r2[f]) << '\n';
}

/// (truth, prediction) pairs for one feature in physical units, flattened
/// over samples and time steps; feeds the density-scatter export.
inline std::vector<double> reconstruction_pairs(const Autoencoder& model, const FeatureStats& stats,
                                                const SuperSegmentSet& set, int feature) {
  if (feature < 0 || feature >= kNumFeatures) throw ConfigError("reconstruction_pairs: bad feature");
  const SuperSegmentSet* std_set = &set;
  SuperSegmentSet owned;
  if (!set.standardized()) {
    owned = standardize(set, stats);
    std_set = &owned;
  } else if (!(*set.stats == stats)) {
    throw DataError("reconstruction_pairs: set standardized with different statistics");
  }

  const std::size_t n = std_set->size();
  std::vector<double> pairs(n * kWindowPoints * 2);
  const std::size_t sample_size = model.config().input_size();
  parallel_for(n, [&](std::size_t i) {
    Autoencoder::Cache cache;
    std::vector<double> recon(sample_size);
    const auto& s = std_set->samples[i];
    model.forward(s.values.data(), false, 0, cache, recon.data());
    for (int p = 0; p < kWindowPoints; ++p) {
      const double truth = s.at(p, feature) * stats.stddev[feature] + stats.mean[feature];
      const double pred =
          recon[p * kNumFeatures + feature] * stats.stddev[feature] + stats.mean[feature];
      pairs[(i * kWindowPoints + p) * 2] = truth;
      pairs[(i * kWindowPoints + p) * 2 + 1] = pred;
    }
  });
  return pairs;
}

/// 2-D histogram over the bounding box of the points; counts always sum to
/// the number of points.
struct DensityGrid {
  std::size_t nx = 0, ny = 0;
  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
  std::vector<std::size_t> counts; // row-major ny x nx

  std::size_t at(std::size_t ix, std::size_t iy) const { return counts[iy * nx + ix]; }
};

inline DensityGrid density_grid(const double* points, std::size_t n, std::size_t nx, std::size_t ny) {
  if (n < 1) throw DataError("density_grid: empty input");
  if (nx < 1 || ny < 1) throw ConfigError("density_grid: bins must be positive");

  DensityGrid g;
  g.nx = nx;
  g.ny = ny;
  g.x_min = g.x_max = points[0];
  g.y_min = g.y_max = points[1];
  for (std::size_t i = 0; i < n; ++i) {
    g.x_min = std::min(g.x_min, points[i * 2]);
    g.x_max = std::max(g.x_max, points[i * 2]);
    g.y_min = std::min(g.y_min, points[i * 2 + 1]);
    g.y_max = std::max(g.y_max, points[i * 2 + 1]);
  }
  g.counts.assign(nx * ny, 0);
  const double wx = g.x_max - g.x_min, wy = g.y_max - g.y_min;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t ix = 0, iy = 0;
    if (wx > 0) {
      ix = static_cast<std::size_t>((points[i * 2] - g.x_min) / wx * static_cast<double>(nx));
      if (ix >= nx) ix = nx - 1;
    }
    if (wy > 0) {
      iy = static_cast<std::size_t>((points[i * 2 + 1] - g.y_min) / wy * static_cast<double>(ny));
      if (iy >= ny) iy = ny - 1;
    }
    g.counts[iy * nx + ix] += 1;
  }
  return g;
}

inline void write_density_csv(const std::filesystem::path& path, const DensityGrid& g) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "# extent," << fmt_double(g.x_min) << ',' << fmt_double(g.x_max) << ','
     << fmt_double(g.y_min) << ',' << fmt_double(g.y_max) << '\n';
  for (std::size_t iy = 0; iy < g.ny; ++iy) {
    for (std::size_t ix = 0; ix < g.nx; ++ix) {
      if (ix) os << ',';
      os << g.at(ix, iy);
    }
    os << '\n';
  }
}

} // namespace floe
