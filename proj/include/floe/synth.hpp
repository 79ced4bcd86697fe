#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/rng.hpp"
#include "floe/track.hpp"

namespace floe {

enum class Regime : std::uint32_t { water = 0, thin_ice = 1, sea_ice = 2 };

inline const char* regime_name(Regime r) {
  switch (r) {
    case Regime::water: return "water";
    case Regime::thin_ice: return "thin_ice";
    default: return "sea_ice";
  }
}

struct RegimeParams {
  double height_mean, height_std;
  double photon_mean, photon_std;
  double background_mean, background_std;
  double pulses_mean, pulses_std;
  double ridge_rate = 0.0; // per segment; sea-ice roughness spikes
  double ridge_min = 0.0, ridge_max = 0.0;
};

/// Three-regime along-track generator. The numeric values are test fixtures
/// chosen so the surface classes are separable but overlapping; everything
/// is configurable.
struct SynthConfig {
  std::size_t n_tracks = 24;
  double track_length_m = 25000.0;
  double spacing_min_m = 10.0; // base spacing range, must stay within [10, 200]
  double spacing_max_m = 45.0;
  double gap_injection_rate = 0.03; // probability of a long (> 50 m) spacing
  double gap_min_m = 55.0;
  double gap_max_m = 200.0;
  double regime_switch_rate_per_km = 0.8;
  // Along-track correlation length of the feature deviations. Surface
  // features vary smoothly at the 100 m scale, so deviations follow an
  // AR(1) process in distance rather than white noise; the marginal
  // distribution per segment stays N(mean, std^2).
  double correlation_length_m = 600.0;
  std::array<RegimeParams, 3> regimes{{
      {0.02, 0.01, 10.0, 1.5, 0.25, 0.05, 120.0, 10.0},                 // water
      {0.10, 0.03, 5.0, 1.0, 0.50, 0.10, 150.0, 15.0},                  // thin ice
      {0.30, 0.10, 2.0, 0.5, 0.80, 0.15, 180.0, 20.0, 0.02, 0.5, 2.0},  // sea ice
  }};

  void validate() const {
    if (spacing_min_m < 10.0 || spacing_max_m > 200.0 || spacing_min_m > spacing_max_m)
      throw ConfigError("synth: base spacing range must lie within [10, 200] m");
    if (gap_injection_rate > 0.0 && (gap_min_m <= 50.0 || gap_max_m > 200.0 || gap_min_m > gap_max_m))
      throw ConfigError("synth: injected gap range must lie within (50, 200] m");
    if (gap_injection_rate < 0.0 || gap_injection_rate > 1.0)
      throw ConfigError("synth: gap_injection_rate must be a probability");
    if (track_length_m <= 0.0 || n_tracks == 0) throw ConfigError("synth: empty corpus requested");
    if (correlation_length_m <= 0.0) throw ConfigError("synth: correlation length must be positive");
  }
};

struct LabeledTrack {
  Track track;
  std::vector<Regime> labels; // aligned with track.segments, never fed to models
};

inline LabeledTrack generate_track(const SynthConfig& cfg, std::uint64_t seed,
                                   std::string track_id) {
  cfg.validate();
  Rng rng(seed);
  LabeledTrack out;
  out.track.track_id = std::move(track_id);

  Regime regime = static_cast<Regime>(rng.below(3));
  // unit-variance AR(1) latents, one per feature; fresh on regime switches
  std::array<double, 4> latent;
  for (auto& z : latent) z = rng.normal();

  double distance = 0.0;
  for (;;) {
    const RegimeParams& rp = cfg.regimes[static_cast<std::size_t>(regime)];
    Segment s;
    s.along_track_distance = distance;
    s.height = rp.height_mean + rp.height_std * latent[0];
    if (rp.ridge_rate > 0.0 && rng.bernoulli(rp.ridge_rate))
      s.height += rng.uniform(rp.ridge_min, rp.ridge_max);
    s.photon_rate = std::max(1e-3, rp.photon_mean + rp.photon_std * latent[1]);
    s.background_rate = rp.background_mean + rp.background_std * latent[2];
    s.n_pulses = std::max(1.0, rp.pulses_mean + rp.pulses_std * latent[3]);
    out.track.segments.push_back(s);
    out.labels.push_back(regime);

    const double spacing = rng.bernoulli(cfg.gap_injection_rate)
                               ? rng.uniform(cfg.gap_min_m, cfg.gap_max_m)
                               : rng.uniform(cfg.spacing_min_m, cfg.spacing_max_m);
    distance += spacing;
    if (distance > cfg.track_length_m) break;

    // Markov regime switching, scaled by the hop length
    const double p_switch = cfg.regime_switch_rate_per_km * spacing / 1000.0;
    if (rng.bernoulli(std::min(1.0, p_switch))) {
      const std::uint64_t other = rng.below(2);
      regime = static_cast<Regime>((static_cast<std::uint64_t>(regime) + 1 + other) % 3);
      for (auto& z : latent) z = rng.normal();
    } else {
      const double rho = std::exp(-spacing / cfg.correlation_length_m);
      const double innovation = std::sqrt(1.0 - rho * rho);
      for (auto& z : latent) z = rho * z + innovation * rng.normal();
    }
  }
  return out;
}

struct SynthCorpus {
  TrackCollection tracks;
  std::vector<std::vector<Regime>> labels; // aligned with tracks
};

inline SynthCorpus generate_corpus(const SynthConfig& cfg, std::size_t n_tracks,
                                   std::uint64_t seed) {
  SynthCorpus corpus;
  corpus.tracks.tracks.resize(n_tracks);
  corpus.labels.resize(n_tracks);
  for (std::size_t t = 0; t < n_tracks; ++t) {
    char id[32];
    std::snprintf(id, sizeof(id), "synth-%04zu", t);
    auto lt = generate_track(cfg, derive_seed(seed, t), id);
    corpus.tracks.tracks[t] = std::move(lt.track);
    corpus.labels[t] = std::move(lt.labels);
  }
  return corpus;
}

inline SynthCorpus generate_corpus(const SynthConfig& cfg, std::uint64_t seed) {
  return generate_corpus(cfg, cfg.n_tracks, seed);
}

// Label sidecar, aligned by (track_id, distance); kept apart from the track
// CSV so labels can never leak into a modeling path.
inline void write_labels_csv(const std::filesystem::path& path, const SynthCorpus& corpus) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "track_id,distance_m,regime\n";
  for (std::size_t t = 0; t < corpus.tracks.tracks.size(); ++t) {
    const auto& track = corpus.tracks.tracks[t];
    for (std::size_t s = 0; s < track.segments.size(); ++s)
      os << track.track_id << ',' << fmt_double(track.segments[s].along_track_distance) << ','
         << regime_name(corpus.labels[t][s]) << '\n';
  }
}

} // namespace floe
