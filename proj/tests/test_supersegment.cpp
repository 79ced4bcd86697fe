#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <optional>

#include "floe/rng.hpp"
#include "floe/supersegment.hpp"
#include "floe/synth.hpp"

using namespace floe;
namespace fs = std::filesystem;

namespace {

// Independent reference interpolator. Works per grid point: find the exact
// segment hit or the strictly bracketing pair by linear scan, reject the
// window when a grid point would extrapolate or its bracketing gap exceeds
// 50 m. This is a different formulation from the production interval sweep.
std::optional<SuperSegment> oracle_window(const Track& t, std::size_t c) {
  const auto& segs = t.segments;
  SuperSegment out;
  out.center_distance = segs[c].along_track_distance;
  for (int p = 0; p < kWindowPoints; ++p) {
    const double g = out.center_distance + (static_cast<double>(p) - 5.0) * kGridSpacing;
    if (g < segs.front().along_track_distance || g > segs.back().along_track_distance)
      return std::nullopt; // would extrapolate

    bool exact = false;
    for (std::size_t i = 0; i < segs.size(); ++i) {
      if (segs[i].along_track_distance == g) {
        for (int f = 0; f < kNumFeatures; ++f) out.at(p, f) = segs[i].feature(f);
        exact = true;
        break;
      }
    }
    if (exact) continue;

    std::size_t left = segs.size();
    for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
      if (segs[i].along_track_distance < g && g < segs[i + 1].along_track_distance) {
        left = i;
        break;
      }
    }
    REQUIRE(left < segs.size());
    const double da = segs[left].along_track_distance;
    const double db = segs[left + 1].along_track_distance;
    if (db - da > kMaxGap) return std::nullopt;
    const double w = (g - da) / (db - da);
    for (int f = 0; f < kNumFeatures; ++f) {
      const double va = segs[left].feature(f);
      const double vb = segs[left + 1].feature(f);
      out.at(p, f) = va + (vb - va) * w;
    }
  }
  return out;
}

std::vector<SuperSegment> oracle_supersegments(const Track& t) {
  std::vector<SuperSegment> out;
  for (std::size_t c = 0; c < t.segments.size(); ++c) {
    auto w = oracle_window(t, c);
    if (w) out.push_back(*w);
  }
  return out;
}

Track make_track(const std::string& id, const std::vector<double>& dists, double height_scale = 1.0) {
  Track t;
  t.track_id = id;
  Rng rng(fnv1a64(id));
  for (double d : dists) {
    Segment s;
    s.along_track_distance = d;
    s.height = rng.uniform(-1, 1) * height_scale;
    s.photon_rate = rng.uniform(0, 10);
    s.background_rate = rng.uniform(-2, 2);
    s.n_pulses = rng.uniform(50, 200);
    t.segments.push_back(s);
  }
  return t;
}

} // namespace

TEST_CASE("build_supersegments: values equal originals at the knots") {
  std::vector<double> dists;
  for (int i = 0; i <= 10; ++i) dists.push_back(static_cast<double>(i) * 10.0);
  const Track t = make_track("knots", dists);
  const auto out = build_supersegments(t);
  REQUIRE(out.size() == 1); // only the middle segment's window fits
  CHECK(out[0].center_distance == 50.0);
  for (int p = 0; p < kWindowPoints; ++p)
    for (int f = 0; f < kNumFeatures; ++f)
      CHECK(out[0].at(p, f) == t.segments[static_cast<std::size_t>(p)].feature(f));
}

TEST_CASE("build_supersegments: linear midpoint") {
  Track t;
  t.track_id = "mid";
  for (double d : {0.0, 50.0, 70.0, 120.0}) {
    Segment s;
    s.along_track_distance = d;
    s.height = (d == 50.0) ? 0.0 : (d == 70.0 ? 1.0 : 5.0);
    s.photon_rate = s.background_rate = s.n_pulses = 1.0;
    t.segments.push_back(s);
  }
  const auto out = build_supersegments(t);
  REQUIRE(out.size() == 2); // windows centred at 50 and at 70 both fit
  CHECK(out[0].center_distance == 50.0);
  // grid point at center + 10 = 60 sits halfway into the (50, 70) span
  CHECK(out[0].at(6, 0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("build_supersegments: a 60 m gap inside the window discards") {
  // gaps: 50, 40, 60, 40, 50 around the centre at 140
  const Track t = make_track("gap", {40.0, 90.0, 130.0, 190.0, 230.0, 280.0});
  // windows centred at 130 (window 80..180) and 190 (window 140..240)
  // overlap the 130->190 gap of 60 m; every candidate is discarded or
  // extrapolating except none survive
  const auto out = build_supersegments(t);
  for (const auto& ss : out) {
    CHECK(ss.center_distance != 130.0);
    CHECK(ss.center_distance != 190.0);
  }
  // the same track with the gap closed keeps a centre at 130
  const Track t2 = make_track("gap2", {40.0, 90.0, 130.0, 180.0, 230.0, 280.0});
  const auto out2 = build_supersegments(t2);
  bool found = false;
  for (const auto& ss : out2) found |= (ss.center_distance == 130.0);
  CHECK(found);
}

TEST_CASE("build_supersegments: no extrapolation past track ends") {
  // centre 30 m from the start: window would reach -20 m
  std::vector<double> dists;
  for (int i = 0; i <= 20; ++i) dists.push_back(static_cast<double>(i) * 15.0);
  const Track t = make_track("ends", dists);
  const auto out = build_supersegments(t);
  for (const auto& ss : out) {
    CHECK(ss.center_distance - kHalfWindow >= t.segments.front().along_track_distance);
    CHECK(ss.center_distance + kHalfWindow <= t.segments.back().along_track_distance);
  }
  CHECK(!out.empty());
}

TEST_CASE("build_supersegments: uniform 10 m tracks lose only the ends") {
  for (std::size_t n : {11u, 12u, 30u}) {
    std::vector<double> dists;
    for (std::size_t i = 0; i < n; ++i) dists.push_back(static_cast<double>(i) * 10.0);
    const Track t = make_track("uniform" + std::to_string(n), dists);
    const auto out = build_supersegments(t);
    CHECK(out.size() == n - 10);
  }
}

TEST_CASE("build_supersegments: grid distances and convexity") {
  SynthConfig cfg;
  cfg.track_length_m = 3000;
  for (int rep = 0; rep < 5; ++rep) {
    const auto lt = generate_track(cfg, 100 + rep, "prop");
    const auto out = build_supersegments(lt.track);
    for (const auto& ss : out) {
      for (int p = 0; p < kWindowPoints; ++p) {
        const double g = ss.center_distance + (static_cast<double>(p) - 5.0) * kGridSpacing;
        // locate neighbors and check the convex-combination bound
        const auto& segs = lt.track.segments;
        for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
          if (segs[i].along_track_distance <= g && g <= segs[i + 1].along_track_distance) {
            for (int f = 0; f < kNumFeatures; ++f) {
              const double lo = std::min(segs[i].feature(f), segs[i + 1].feature(f));
              const double hi = std::max(segs[i].feature(f), segs[i + 1].feature(f));
              CHECK(ss.at(p, f) >= lo - 1e-9);
              CHECK(ss.at(p, f) <= hi + 1e-9);
            }
            break;
          }
        }
      }
    }
  }
}

TEST_CASE("build_supersegments: matches the brute-force oracle on random tracks") {
  SynthConfig cfg;
  cfg.track_length_m = 4000;
  cfg.gap_injection_rate = 0.08;
  for (int rep = 0; rep < 25; ++rep) {
    const auto lt = generate_track(cfg, 5000 + rep, "oracle" + std::to_string(rep));
    const auto got = build_supersegments(lt.track);
    const auto expected = oracle_supersegments(lt.track);
    REQUIRE(got.size() == expected.size()); // identical discard decisions
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].center_distance == expected[i].center_distance);
      for (int v = 0; v < kWindowValues; ++v)
        CHECK(got[i].values[v] == doctest::Approx(expected[i].values[v]).epsilon(1e-10));
    }
  }
}

TEST_CASE("build_supersegment_set: concatenated in track order, deterministic") {
  SynthConfig cfg;
  cfg.track_length_m = 2000;
  SynthCorpus corpus = generate_corpus(cfg, 6, 42);
  const auto a = build_supersegment_set(corpus.tracks, SplitTag::train);
  const auto b = build_supersegment_set(corpus.tracks, SplitTag::train);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.samples[i].track_index == b.samples[i].track_index);
    CHECK(a.samples[i].center_distance == b.samples[i].center_distance);
  }
  // track indices are non-decreasing (track order)
  for (std::size_t i = 1; i < a.size(); ++i)
    CHECK(a.samples[i].track_index >= a.samples[i - 1].track_index);
}

namespace {

SuperSegmentSet small_set() {
  SuperSegmentSet set;
  set.track_ids = {"x"};
  Rng rng(7);
  for (int i = 0; i < 40; ++i) {
    SuperSegment s;
    s.track_index = 0;
    s.center_distance = 100.0 + i;
    for (auto& v : s.values) v = rng.normal(0.5, 2.0);
    set.samples.push_back(s);
  }
  return set;
}

} // namespace

TEST_CASE("compute_stats: degenerate feature is an error naming it") {
  SuperSegmentSet set;
  set.track_ids = {"x"};
  SuperSegment s;
  Rng rng(3);
  for (int p = 0; p < kWindowPoints; ++p) {
    s.at(p, 0) = 2.0; // constant height
    s.at(p, 1) = rng.uniform(0, 1);
    s.at(p, 2) = rng.uniform(0, 1);
    s.at(p, 3) = rng.uniform(0, 1);
  }
  set.samples.push_back(s);
  CHECK_THROWS_WITH_AS(compute_stats(set), doctest::Contains("height"), DataError);
  CHECK_THROWS_AS(compute_stats(SuperSegmentSet{}), DataError);
}

TEST_CASE("compute_stats: two-sample arithmetic") {
  SuperSegmentSet set;
  set.track_ids = {"x"};
  Rng rng(5);
  for (int k = 0; k < 2; ++k) {
    SuperSegment s;
    for (int p = 0; p < kWindowPoints; ++p) {
      s.at(p, 0) = k == 0 ? 0.0 : 2.0;
      s.at(p, 1) = rng.uniform(0, 1);
      s.at(p, 2) = rng.uniform(0, 1);
      s.at(p, 3) = rng.uniform(0, 1);
    }
    set.samples.push_back(s);
  }
  const auto stats = compute_stats(set);
  CHECK(stats.mean[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(stats.stddev[0] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("compute_stats: matches an independent two-pass oracle") {
  const auto set = small_set();
  const auto stats = compute_stats(set);
  for (int f = 0; f < kNumFeatures; ++f) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : set.samples)
      for (int p = 0; p < kWindowPoints; ++p) {
        sum += s.at(p, f);
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    double var = 0;
    for (const auto& s : set.samples)
      for (int p = 0; p < kWindowPoints; ++p) var += (s.at(p, f) - mean) * (s.at(p, f) - mean);
    var /= static_cast<double>(n);
    CHECK(stats.mean[f] == doctest::Approx(mean).epsilon(1e-10));
    CHECK(stats.stddev[f] == doctest::Approx(std::sqrt(var)).epsilon(1e-10));
  }
}

TEST_CASE("standardize: round trip, zeros at the mean, guard") {
  const auto set = small_set();
  const auto stats = compute_stats(set);
  const auto std_set = standardize(set, stats);
  CHECK(std_set.standardized());
  CHECK_THROWS_AS(standardize(std_set, stats), DataError); // double standardization

  const auto back = destandardize(std_set);
  for (std::size_t i = 0; i < set.size(); ++i)
    for (int v = 0; v < kWindowValues; ++v)
      CHECK(back.samples[i].values[v] == doctest::Approx(set.samples[i].values[v]).epsilon(1e-12));
  CHECK_THROWS_AS(destandardize(back), DataError);

  // x == mean maps to zero
  SuperSegmentSet at_mean = set;
  for (auto& s : at_mean.samples)
    for (int p = 0; p < kWindowPoints; ++p)
      for (int f = 0; f < kNumFeatures; ++f) s.at(p, f) = stats.mean[f];
  const auto zeros = standardize(at_mean, stats);
  for (const auto& s : zeros.samples)
    for (double v : s.values) CHECK(v == 0.0);

  // standardized train split has mean 0, std 1
  const auto restats_in = destandardize(std_set);
  const auto sstd = standardize(restats_in, stats);
  for (int f = 0; f < kNumFeatures; ++f) {
    double sum = 0;
    std::size_t n = 0;
    for (const auto& s : sstd.samples)
      for (int p = 0; p < kWindowPoints; ++p) {
        sum += s.at(p, f);
        ++n;
      }
    const double mean = sum / static_cast<double>(n);
    double var = 0;
    for (const auto& s : sstd.samples)
      for (int p = 0; p < kWindowPoints; ++p) var += (s.at(p, f) - mean) * (s.at(p, f) - mean);
    var /= static_cast<double>(n);
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(std::fabs(std::sqrt(var) - 1.0) < 1e-10);
  }
}

TEST_CASE("sseg file: round trip at f32 precision, error paths") {
  auto set = small_set();
  set.split_tag = SplitTag::val;
  const fs::path p = fs::temp_directory_path() / "floe_test.sseg";
  save_supersegments(p, set);
  const auto back = load_supersegments(p, SplitTag::val);
  REQUIRE(back.size() == set.size());
  CHECK(back.track_ids == set.track_ids);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(back.samples[i].center_distance == set.samples[i].center_distance);
    for (int v = 0; v < kWindowValues; ++v)
      CHECK(back.samples[i].values[v] ==
            static_cast<double>(static_cast<float>(set.samples[i].values[v])));
  }

  // wrong magic
  {
    auto os = open_binary_out(p);
    write_bytes(os, "NOPE", 4);
    write_u32(os, 1);
  }
  CHECK_THROWS_AS(load_supersegments(p), IoError);

  // truncated
  save_supersegments(p, set);
  const auto full_size = fs::file_size(p);
  fs::resize_file(p, full_size / 2);
  CHECK_THROWS_AS(load_supersegments(p), IoError);
  fs::remove(p);
}

TEST_CASE("sseg csv export mirrors the sample layout") {
  const auto set = small_set();
  const fs::path p = fs::temp_directory_path() / "floe_sseg_debug.csv";
  export_supersegments_csv(p, set);
  std::ifstream is(p);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(is, line)) ++lines;
  CHECK(lines == 1 + set.size() * kWindowPoints);
  fs::remove(p);
}
