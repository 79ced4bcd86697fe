#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/parallel.hpp"
#include "floe/track.hpp"

namespace floe {

inline constexpr int kWindowPoints = 11;      // grid points per super-segment
inline constexpr double kGridSpacing = 10.0;  // meters between grid points
inline constexpr double kHalfWindow = 50.0;   // forward/backward buffer, meters
inline constexpr double kMaxGap = 50.0;       // discard threshold for source gaps
inline constexpr int kWindowValues = kWindowPoints * kNumFeatures;

/// Fixed-length topographic sequence: 11 grid points at 10 m spacing centered
/// on an original segment, 4 features per point, row-major [point][feature].
struct SuperSegment {
  std::uint32_t track_index = 0;
  double center_distance = 0.0;
  std::array<double, kWindowValues> values{};

  double at(int point, int feature) const { return values[point * kNumFeatures + feature]; }
  double& at(int point, int feature) { return values[point * kNumFeatures + feature]; }
};

struct FeatureStats {
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> stddev{};

  bool operator==(const FeatureStats&) const = default;
};

enum class SplitTag : std::uint8_t { train = 0, val = 1, test = 2, unsplit = 3 };

inline const char* split_tag_name(SplitTag t) {
  switch (t) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    case SplitTag::test: return "test";
    default: return "unsplit";
  }
}

struct SuperSegmentSet {
  std::vector<std::string> track_ids;   // indexed by SuperSegment::track_index
  std::vector<SuperSegment> samples;
  std::optional<FeatureStats> stats;    // present iff values are standardized
  SplitTag split_tag = SplitTag::unsplit;

  bool standardized() const { return stats.has_value(); }
  std::size_t size() const { return samples.size(); }
};

/// Builds one candidate window per original segment, centered on it, and
/// fills the 11-point grid by linear interpolation between the bracketing
/// original segments. A candidate is discarded when the window would need
/// extrapolation past the track ends, or when any adjacent source gap longer
/// than 50 m overlaps the window.
inline std::vector<SuperSegment> build_supersegments(const Track& track) {
  validate_track(track);
  const auto& segs = track.segments;
  const std::size_t n = segs.size();

  std::vector<SuperSegment> out;
  for (std::size_t c = 0; c < n; ++c) {
    const double center = segs[c].along_track_distance;
    const double lo = center - kHalfWindow;
    const double hi = center + kHalfWindow;
    if (lo < segs.front().along_track_distance || hi > segs.back().along_track_distance)
      continue; // no extrapolation

    // Gap rule: reject if any adjacent pair with gap > 50 m overlaps (lo, hi).
    // Walk outward from the center; pairs are ordered so we can stop early.
    bool reject = false;
    for (std::size_t i = c; i + 1 < n; ++i) {
      const double a = segs[i].along_track_distance;
      const double b = segs[i + 1].along_track_distance;
      if (a >= hi) break;
      if (b - a > kMaxGap && b > lo) { reject = true; break; }
    }
    if (!reject) {
      for (std::size_t i = c; i-- > 0;) {
        const double a = segs[i].along_track_distance;
        const double b = segs[i + 1].along_track_distance;
        if (b <= lo) break;
        if (b - a > kMaxGap && a < hi) { reject = true; break; }
      }
    }
    if (reject) continue;

    SuperSegment ss;
    ss.center_distance = center;
    std::size_t left = c; // bracketing index moves with the grid point
    for (int p = 0; p < kWindowPoints; ++p) {
      const double g = center + (static_cast<double>(p) - 5.0) * kGridSpacing;
      if (p == 0) {
        left = c;
        while (left > 0 && segs[left].along_track_distance > g) --left;
      }
      while (left + 2 < n && segs[left + 1].along_track_distance <= g) ++left;
      const double da = segs[left].along_track_distance;
      const double db = segs[left + 1].along_track_distance;
      const double t = (g - da) / (db - da);
      for (int f = 0; f < kNumFeatures; ++f) {
        const double va = segs[left].feature(f);
        const double vb = segs[left + 1].feature(f);
        // exact knot hits reproduce the source value bit-for-bit
        ss.at(p, f) = (g == da) ? va : (g == db) ? vb : va + (vb - va) * t;
      }
    }
    out.push_back(ss);
  }
  return out;
}

/// Builds super-segments for every track in the collection, in parallel, and
/// concatenates the results in track order so output is iteration-order free.
inline SuperSegmentSet build_supersegment_set(const TrackCollection& tc,
                                              SplitTag tag = SplitTag::unsplit) {
  SuperSegmentSet set;
  set.split_tag = tag;
  set.track_ids.reserve(tc.tracks.size());
  for (const auto& t : tc.tracks) set.track_ids.push_back(t.track_id);

  std::vector<std::vector<SuperSegment>> per_track(tc.tracks.size());
  parallel_for(tc.tracks.size(), [&](std::size_t i) {
    per_track[i] = build_supersegments(tc.tracks[i]);
    for (auto& ss : per_track[i]) ss.track_index = static_cast<std::uint32_t>(i);
  });
  for (auto& v : per_track)
    set.samples.insert(set.samples.end(), v.begin(), v.end());
  return set;
}

/// Per-feature mean and population std over all samples and time steps.
/// Computed on the train split only; a zero std is an error naming the feature.
inline FeatureStats compute_stats(const SuperSegmentSet& train_set) {
  if (train_set.samples.empty()) throw DataError("compute_stats: empty set");
  if (train_set.standardized()) throw DataError("compute_stats: set already standardized");

  FeatureStats stats;
  const double count = static_cast<double>(train_set.samples.size() * kWindowPoints);
  for (int f = 0; f < kNumFeatures; ++f) {
    double sum = 0.0;
    for (const auto& s : train_set.samples)
      for (int p = 0; p < kWindowPoints; ++p) sum += s.at(p, f);
    const double mean = sum / count;
    double var = 0.0;
    for (const auto& s : train_set.samples)
      for (int p = 0; p < kWindowPoints; ++p) {
        const double d = s.at(p, f) - mean;
        var += d * d;
      }
    var /= count;
    stats.mean[f] = mean;
    stats.stddev[f] = std::sqrt(var);
    if (stats.stddev[f] == 0.0)
      throw DataError(std::string("compute_stats: zero variance in feature '") + feature_name(f) + "'");
  }
  return stats;
}

inline SuperSegmentSet standardize(const SuperSegmentSet& set, const FeatureStats& stats) {
  if (set.standardized()) throw DataError("standardize: set already standardized");
  for (int f = 0; f < kNumFeatures; ++f) {
    if (!(stats.stddev[f] > 0.0) || !std::isfinite(stats.stddev[f]) || !std::isfinite(stats.mean[f]))
      throw ConfigError(std::string("standardize: invalid stats for feature '") + feature_name(f) + "'");
  }
  SuperSegmentSet out = set;
  out.stats = stats;
  for (auto& s : out.samples)
    for (int p = 0; p < kWindowPoints; ++p)
      for (int f = 0; f < kNumFeatures; ++f)
        s.at(p, f) = (s.at(p, f) - stats.mean[f]) / stats.stddev[f];
  return out;
}

inline SuperSegmentSet destandardize(const SuperSegmentSet& set) {
  if (!set.standardized()) throw DataError("destandardize: set is not standardized");
  const FeatureStats& stats = *set.stats;
  SuperSegmentSet out = set;
  out.stats.reset();
  for (auto& s : out.samples)
    for (int p = 0; p < kWindowPoints; ++p)
      for (int f = 0; f < kNumFeatures; ++f)
        s.at(p, f) = s.at(p, f) * stats.stddev[f] + stats.mean[f];
  return out;
}

// ---- binary super-segment file ("SSEG") ----
//
// magic "SSEG", u32 version = 1, little-endian; u32 track-id count, each id
// as u16 length + bytes; u64 sample count; per sample a u32 track index,
// f64 center distance and 44 f32 values, row-major 11x4.

inline void save_supersegments(const std::filesystem::path& path, const SuperSegmentSet& set) {
  auto os = open_binary_out(path);
  write_bytes(os, "SSEG", 4);
  write_u32(os, 1);
  write_u32(os, static_cast<std::uint32_t>(set.track_ids.size()));
  for (const auto& id : set.track_ids) {
    write_u16(os, static_cast<std::uint16_t>(id.size()));
    write_bytes(os, id.data(), id.size());
  }
  write_u64(os, set.samples.size());
  for (const auto& s : set.samples) {
    write_u32(os, s.track_index);
    write_f64(os, s.center_distance);
    for (double v : s.values) write_f32(os, static_cast<float>(v));
  }
}

inline SuperSegmentSet load_supersegments(const std::filesystem::path& path,
                                          SplitTag tag = SplitTag::unsplit) {
  auto is = open_binary_in(path);
  char magic[4];
  read_bytes(is, magic, 4);
  if (std::string_view(magic, 4) != "SSEG")
    throw IoError("not a super-segment file: " + path.string());
  const std::uint32_t version = read_u32(is);
  if (version != 1) throw IoError("unsupported SSEG version " + std::to_string(version));

  SuperSegmentSet set;
  set.split_tag = tag;
  const std::uint32_t n_ids = read_u32(is);
  set.track_ids.reserve(n_ids);
  for (std::uint32_t i = 0; i < n_ids; ++i) {
    const std::uint16_t len = read_u16(is);
    std::string id(len, '\0');
    read_bytes(is, id.data(), len);
    set.track_ids.push_back(std::move(id));
  }
  const std::uint64_t n_samples = read_u64(is);
  set.samples.resize(n_samples);
  for (auto& s : set.samples) {
    s.track_index = read_u32(is);
    if (s.track_index >= set.track_ids.size())
      throw IoError("SSEG track index out of range in " + path.string());
    s.center_distance = read_f64(is);
    for (double& v : s.values) v = static_cast<double>(read_f32(is));
  }
  return set;
}

// Debug mirror of the binary format.
inline void export_supersegments_csv(const std::filesystem::path& path, const SuperSegmentSet& set) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "track_id,center_distance_m,point,height,photon_rate,background_rate,n_pulses\n";
  for (const auto& s : set.samples)
    for (int p = 0; p < kWindowPoints; ++p) {
      os << set.track_ids[s.track_index] << ',' << fmt_double(s.center_distance) << ',' << p;
      for (int f = 0; f < kNumFeatures; ++f) os << ',' << fmt_double(s.at(p, f));
      os << '\n';
    }
}

} // namespace floe
