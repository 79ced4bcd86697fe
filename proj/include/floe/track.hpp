#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/rng.hpp"

namespace floe {

inline constexpr int kNumFeatures = 4; // height, photon_rate, background_rate, n_pulses

/// One along-track record. Distances are strictly increasing within a track;
/// n_pulses is kept as a real so it can be interpolated.
struct Segment {
  double along_track_distance = 0.0; // meters
  double height = 0.0;               // meters
  double photon_rate = 0.0;          // photons per shot
  double background_rate = 0.0;      // dimensionless once normalized per track
  double n_pulses = 0.0;             // count, non-negative real

  double feature(int f) const {
    switch (f) {
      case 0: return height;
      case 1: return photon_rate;
      case 2: return background_rate;
      default: return n_pulses;
    }
  }
  void set_feature(int f, double v) {
    switch (f) {
      case 0: height = v; break;
      case 1: photon_rate = v; break;
      case 2: background_rate = v; break;
      default: n_pulses = v; break;
    }
  }
};

inline const char* feature_name(int f) {
  static const char* names[kNumFeatures] = {"height", "photon_rate", "background_rate", "n_pulses"};
  return names[f];
}

struct Track {
  std::string track_id;
  std::vector<Segment> segments; // sorted by along_track_distance, strictly increasing
};

struct TrackCollection {
  std::vector<Track> tracks;      // in first-appearance order of track_id
  std::size_t dropped_rows = 0;   // rows removed because a field was non-finite
};

// Maps the canonical column roles onto the header names present in a file.
struct ColumnMap {
  std::string track_id = "track_id";
  std::string distance = "distance_m";
  std::string height = "height_m";
  std::string photon_rate = "photon_rate";
  std::string background_rate = "background_rate";
  std::string n_pulses = "n_pulses";
};

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct SplitAssignment {
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
  std::vector<std::string> test_ids;
};

inline void validate_track(const Track& t) {
  if (t.segments.size() < 2) throw DataError("track '" + t.track_id + "' has fewer than 2 segments");
  for (std::size_t i = 0; i + 1 < t.segments.size(); ++i) {
    if (!(t.segments[i].along_track_distance < t.segments[i + 1].along_track_distance))
      throw DataError("track '" + t.track_id + "' distances not strictly increasing");
  }
}

/// Reads the track CSV format: header row, comma separated, `.` decimals,
/// lines starting with '#' ignored. Rows containing any non-finite value are
/// dropped and counted; unparsable numerics and duplicated (track, distance)
/// pairs are hard errors naming the offending row.
inline TrackCollection ingest_tracks(const std::filesystem::path& path, const ColumnMap& cmap = {}) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open track file: " + path.string());

  std::string line;
  // header
  std::vector<std::string> header;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv_line(line);
    for (auto& h : header) h = trim(h);
    break;
  }
  if (header.empty()) throw DataError("empty track file: " + path.string());

  auto col = [&](const std::string& name) -> std::size_t {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw ConfigError("missing column '" + name + "' in " + path.string());
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = col(cmap.track_id);
  const std::size_t c_dist = col(cmap.distance);
  const std::size_t c_feat[kNumFeatures] = {col(cmap.height), col(cmap.photon_rate),
                                            col(cmap.background_rate), col(cmap.n_pulses)};

  struct Row {
    Segment seg;
    std::size_t line_no;
  };
  std::map<std::string, std::vector<Row>> by_id;
  std::vector<std::string> id_order;
  std::size_t dropped = 0;
  std::size_t line_no = 1; // header consumed above; counting of data rows resumes below

  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (fields.size() < header.size())
      throw DataError("row " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " fields, got " + std::to_string(fields.size()));

    Row row;
    row.line_no = line_no;
    double vals[1 + kNumFeatures];
    const std::size_t cols[1 + kNumFeatures] = {c_dist, c_feat[0], c_feat[1], c_feat[2], c_feat[3]};
    bool finite = true;
    for (int i = 0; i < 1 + kNumFeatures; ++i) {
      if (!parse_double(fields[cols[i]], vals[i]))
        throw DataError("row " + std::to_string(line_no) + ": cannot parse '" + fields[cols[i]] + "'");
      if (!std::isfinite(vals[i])) finite = false;
    }
    if (!finite) {
      ++dropped;
      continue;
    }
    row.seg.along_track_distance = vals[0];
    row.seg.height = vals[1];
    row.seg.photon_rate = vals[2];
    row.seg.background_rate = vals[3];
    row.seg.n_pulses = vals[4];

    const std::string id = trim(fields[c_id]);
    if (id.empty()) throw DataError("row " + std::to_string(line_no) + ": empty track_id");
    auto [it, inserted] = by_id.try_emplace(id);
    if (inserted) id_order.push_back(id);
    it->second.push_back(row);
  }

  TrackCollection out;
  out.dropped_rows = dropped;
  for (const auto& id : id_order) {
    auto& rows = by_id[id];
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      return a.seg.along_track_distance < b.seg.along_track_distance;
    });
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
      if (rows[i].seg.along_track_distance == rows[i + 1].seg.along_track_distance)
        throw DataError("duplicate (track_id, distance) at row " +
                        std::to_string(rows[i + 1].line_no) + " (track '" + id + "')");
    }
    Track t;
    t.track_id = id;
    t.segments.reserve(rows.size());
    for (const auto& r : rows) t.segments.push_back(r.seg);
    validate_track(t);
    out.tracks.push_back(std::move(t));
  }
  return out;
}

inline void write_tracks_csv(const std::filesystem::path& path, const TrackCollection& tc) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "track_id,distance_m,height_m,photon_rate,background_rate,n_pulses\n";
  for (const auto& t : tc.tracks)
    for (const auto& s : t.segments)
      os << t.track_id << ',' << fmt_double(s.along_track_distance) << ',' << fmt_double(s.height)
         << ',' << fmt_double(s.photon_rate) << ',' << fmt_double(s.background_rate) << ','
         << fmt_double(s.n_pulses) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

/// Per-track z-score of the background rate (population std). A constant
/// background maps to all zeros.
inline Track normalize_background_per_track(const Track& in) {
  if (in.segments.size() < 2)
    throw DataError("track '" + in.track_id + "' has fewer than 2 segments");
  double mean = 0.0;
  for (const auto& s : in.segments) mean += s.background_rate;
  mean /= static_cast<double>(in.segments.size());
  double var = 0.0;
  for (const auto& s : in.segments) {
    const double d = s.background_rate - mean;
    var += d * d;
  }
  var /= static_cast<double>(in.segments.size());
  const double sd = std::sqrt(var);

  Track out = in;
  for (auto& s : out.segments)
    s.background_rate = (sd == 0.0) ? 0.0 : (s.background_rate - mean) / sd;
  return out;
}

inline TrackCollection normalize_background(const TrackCollection& in) {
  TrackCollection out;
  out.dropped_rows = in.dropped_rows;
  out.tracks.reserve(in.tracks.size());
  for (const auto& t : in.tracks) out.tracks.push_back(normalize_background_per_track(t));
  return out;
}

/// Track-exclusive split. The id list is shuffled with the seeded RNG, then
/// counts follow n_val = ceil(r_val*N), n_test = ceil(r_test*N), train takes
/// the remainder; this reproduces a 268/39/77 split for 384 tracks at the
/// 0.7/0.1/0.2 ratios.
inline SplitAssignment split_tracks(const std::vector<std::string>& ids, const SplitRatios& ratios,
                                    std::uint64_t seed) {
  const std::size_t n = ids.size();
  if (n < 3) throw DataError("too few tracks: need at least 3, got " + std::to_string(n));
  if (std::fabs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");

  const std::size_t n_val = static_cast<std::size_t>(std::ceil(ratios.val * static_cast<double>(n)));
  const std::size_t n_test = static_cast<std::size_t>(std::ceil(ratios.test * static_cast<double>(n)));
  if (n_val + n_test >= n) throw DataError("too few tracks");
  const std::size_t n_train = n - n_val - n_test;

  std::vector<std::string> shuffled = ids;
  Rng rng(seed);
  rng.shuffle(shuffled);

  SplitAssignment out;
  out.train_ids.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val_ids.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train),
                     shuffled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test_ids.assign(shuffled.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), shuffled.end());
  return out;
}

inline void write_split_csv(const std::filesystem::path& path, const SplitAssignment& split) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "track_id,split\n";
  for (const auto& id : split.train_ids) os << id << ",train\n";
  for (const auto& id : split.val_ids) os << id << ",val\n";
  for (const auto& id : split.test_ids) os << id << ",test\n";
}

inline SplitAssignment read_split_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open split file: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty split file: " + path.string());
  SplitAssignment out;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != 2) throw DataError("split file row " + std::to_string(line_no) + ": bad format");
    const std::string id = trim(fields[0]), tag = trim(fields[1]);
    if (tag == "train") out.train_ids.push_back(id);
    else if (tag == "val") out.val_ids.push_back(id);
    else if (tag == "test") out.test_ids.push_back(id);
    else throw DataError("split file row " + std::to_string(line_no) + ": unknown split '" + tag + "'");
  }
  return out;
}

} // namespace floe
