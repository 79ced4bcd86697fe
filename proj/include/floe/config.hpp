#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "floe/autoencoder.hpp"
#include "floe/error.hpp"
#include "floe/io.hpp"
#include "floe/synth.hpp"
#include "floe/track.hpp"
#include "floe/train.hpp"
#include "floe/umap.hpp"

namespace floe {

struct DataConfig {
  std::string path; // empty: the pipeline synthesizes its own corpus
  ColumnMap columns;
};

struct SplitConfig {
  SplitRatios ratios;
  std::uint64_t seed = 1;
};

struct ModelConfig {
  ArchConfig arch;
  TrainConfig train;
};

struct UmapSection {
  UmapConfig umap;
  std::size_t subsample = 100000; // training-subset size fed to UMAP
};

struct AnalysisConfig {
  std::size_t kmeans_k = 3;
  std::size_t bins_x = 64;
  std::size_t bins_y = 64;
  std::size_t compactness_seeds = 3;
  std::uint64_t seed = 4;
};

struct SynthSection {
  SynthConfig synth;
  std::uint64_t seed = 5;
};

/// Full pipeline configuration. Defaults mirror the production settings, so
/// an empty config file runs the reference setup at synthetic desk scale.
struct PipelineConfig {
  DataConfig data;
  SplitConfig split;
  ModelConfig model;
  UmapSection umap;
  AnalysisConfig analysis;
  SynthSection synth;
};

namespace detail {

struct KeyBinding {
  std::string section;
  std::string key;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

inline void bind_double(std::vector<KeyBinding>& out, std::string section, std::string key,
                        double* target) {
  out.push_back({std::move(section), std::move(key),
                 [target](const std::string& v) {
                   double d;
                   if (!parse_double(v, d)) throw ConfigError("cannot parse number '" + v + "'");
                   *target = d;
                 },
                 [target] { return fmt_double(*target); }});
}

inline void bind_size(std::vector<KeyBinding>& out, std::string section, std::string key,
                      std::size_t* target) {
  out.push_back({std::move(section), std::move(key),
                 [target](const std::string& v) {
                   double d;
                   if (!parse_double(v, d) || d < 0 || d != static_cast<double>(static_cast<std::size_t>(d)))
                     throw ConfigError("cannot parse count '" + v + "'");
                   *target = static_cast<std::size_t>(d);
                 },
                 [target] { return std::to_string(*target); }});
}

inline void bind_int(std::vector<KeyBinding>& out, std::string section, std::string key, int* target) {
  out.push_back({std::move(section), std::move(key),
                 [target](const std::string& v) {
                   double d;
                   if (!parse_double(v, d) || d != static_cast<double>(static_cast<int>(d)))
                     throw ConfigError("cannot parse integer '" + v + "'");
                   *target = static_cast<int>(d);
                 },
                 [target] { return std::to_string(*target); }});
}

inline void bind_seed(std::vector<KeyBinding>& out, std::string section, std::string key,
                      std::uint64_t* target) {
  out.push_back({std::move(section), std::move(key),
                 [target](const std::string& v) {
                   try {
                     *target = std::stoull(trim(v));
                   } catch (...) {
                     throw ConfigError("cannot parse seed '" + v + "'");
                   }
                 },
                 [target] { return std::to_string(*target); }});
}

inline void bind_string(std::vector<KeyBinding>& out, std::string section, std::string key,
                        std::string* target) {
  out.push_back({std::move(section), std::move(key),
                 [target](const std::string& v) { *target = trim(v); },
                 [target] { return *target; }});
}

inline std::vector<KeyBinding> bindings(PipelineConfig& c) {
  std::vector<KeyBinding> b;

  bind_string(b, "data", "path", &c.data.path);
  bind_string(b, "data", "col_track_id", &c.data.columns.track_id);
  bind_string(b, "data", "col_distance", &c.data.columns.distance);
  bind_string(b, "data", "col_height", &c.data.columns.height);
  bind_string(b, "data", "col_photon_rate", &c.data.columns.photon_rate);
  bind_string(b, "data", "col_background_rate", &c.data.columns.background_rate);
  bind_string(b, "data", "col_n_pulses", &c.data.columns.n_pulses);

  bind_double(b, "split", "ratio_train", &c.split.ratios.train);
  bind_double(b, "split", "ratio_val", &c.split.ratios.val);
  bind_double(b, "split", "ratio_test", &c.split.ratios.test);
  bind_seed(b, "split", "seed", &c.split.seed);

  b.push_back({"model", "arch",
               [&c](const std::string& v) { c.model.arch.arch = arch_from_string(trim(v)); },
               [&c] { return std::string(arch_name(c.model.arch.arch)); }});
  bind_size(b, "model", "enc1", &c.model.arch.enc1);
  bind_size(b, "model", "enc2", &c.model.arch.enc2);
  bind_size(b, "model", "bottleneck", &c.model.arch.bottleneck);
  bind_size(b, "model", "dec1", &c.model.arch.dec1);
  bind_size(b, "model", "dec2", &c.model.arch.dec2);
  bind_size(b, "model", "kernel", &c.model.arch.kernel);
  bind_double(b, "model", "dropout", &c.model.arch.dropout_p);
  bind_size(b, "model", "max_epochs", &c.model.train.max_epochs);
  bind_size(b, "model", "batch_size", &c.model.train.batch_size);
  bind_size(b, "model", "patience", &c.model.train.patience);
  bind_double(b, "model", "learning_rate", &c.model.train.learning_rate);
  bind_double(b, "model", "beta1", &c.model.train.beta1);
  bind_double(b, "model", "beta2", &c.model.train.beta2);
  bind_double(b, "model", "epsilon", &c.model.train.epsilon);
  bind_seed(b, "model", "seed", &c.model.train.seed);

  bind_size(b, "umap", "n_neighbors", &c.umap.umap.n_neighbors);
  bind_double(b, "umap", "min_dist", &c.umap.umap.min_dist);
  bind_double(b, "umap", "spread", &c.umap.umap.spread);
  bind_int(b, "umap", "n_epochs", &c.umap.umap.n_epochs);
  bind_double(b, "umap", "negative_sample_rate", &c.umap.umap.negative_sample_rate);
  bind_double(b, "umap", "learning_rate", &c.umap.umap.initial_learning_rate);
  bind_size(b, "umap", "subsample", &c.umap.subsample);
  bind_seed(b, "umap", "seed", &c.umap.umap.seed);

  bind_size(b, "analysis", "kmeans_k", &c.analysis.kmeans_k);
  bind_size(b, "analysis", "bins_x", &c.analysis.bins_x);
  bind_size(b, "analysis", "bins_y", &c.analysis.bins_y);
  bind_size(b, "analysis", "compactness_seeds", &c.analysis.compactness_seeds);
  bind_seed(b, "analysis", "seed", &c.analysis.seed);

  bind_size(b, "synth", "n_tracks", &c.synth.synth.n_tracks);
  bind_double(b, "synth", "track_length_m", &c.synth.synth.track_length_m);
  bind_double(b, "synth", "spacing_min_m", &c.synth.synth.spacing_min_m);
  bind_double(b, "synth", "spacing_max_m", &c.synth.synth.spacing_max_m);
  bind_double(b, "synth", "gap_injection_rate", &c.synth.synth.gap_injection_rate);
  bind_double(b, "synth", "gap_min_m", &c.synth.synth.gap_min_m);
  bind_double(b, "synth", "gap_max_m", &c.synth.synth.gap_max_m);
  bind_double(b, "synth", "regime_switch_rate_per_km", &c.synth.synth.regime_switch_rate_per_km);
  bind_double(b, "synth", "correlation_length_m", &c.synth.synth.correlation_length_m);
  bind_seed(b, "synth", "seed", &c.synth.seed);

  static const char* regime_keys[3] = {"water", "thin_ice", "sea_ice"};
  for (int r = 0; r < 3; ++r) {
    RegimeParams* rp = &c.synth.synth.regimes[static_cast<std::size_t>(r)];
    const std::string prefix = regime_keys[r];
    bind_double(b, "synth", prefix + "_height_mean", &rp->height_mean);
    bind_double(b, "synth", prefix + "_height_std", &rp->height_std);
    bind_double(b, "synth", prefix + "_photon_mean", &rp->photon_mean);
    bind_double(b, "synth", prefix + "_photon_std", &rp->photon_std);
    bind_double(b, "synth", prefix + "_background_mean", &rp->background_mean);
    bind_double(b, "synth", prefix + "_background_std", &rp->background_std);
    bind_double(b, "synth", prefix + "_pulses_mean", &rp->pulses_mean);
    bind_double(b, "synth", prefix + "_pulses_std", &rp->pulses_std);
  }
  bind_double(b, "synth", "sea_ice_ridge_rate", &c.synth.synth.regimes[2].ridge_rate);
  bind_double(b, "synth", "sea_ice_ridge_min", &c.synth.synth.regimes[2].ridge_min);
  bind_double(b, "synth", "sea_ice_ridge_max", &c.synth.synth.regimes[2].ridge_max);

  return b;
}

} // namespace detail

/// Parses sectioned `key = value` text. Unknown sections or keys are
/// configuration errors naming the offender; '#' starts a comment line.
inline PipelineConfig parse_config_text(const std::string& text) {
  PipelineConfig cfg;
  auto binds = detail::bindings(cfg);

  std::istringstream is(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section");
      section = trim(t.substr(1, t.size() - 2));
      bool known = false;
      for (const auto& b : binds)
        if (b.section == section) {
          known = true;
          break;
        }
      if (!known) throw ConfigError("unknown config section '" + section + "'");
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (section.empty()) throw ConfigError("key '" + key + "' outside any section");

    bool found = false;
    for (auto& b : binds) {
      if (b.section == section && b.key == key) {
        try {
          b.set(value);
        } catch (const ConfigError& e) {
          throw ConfigError("key '" + section + "." + key + "': " + e.what());
        }
        found = true;
        break;
      }
    }
    if (!found) throw ConfigError("unknown config key '" + section + "." + key + "'");
  }
  return cfg;
}

inline PipelineConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config file: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

/// Canonical dump of every key in binding order; input to the config hash
/// recorded in run manifests.
inline std::string canonical_config_text(const PipelineConfig& cfg) {
  auto binds = detail::bindings(const_cast<PipelineConfig&>(cfg));
  std::string out, section;
  for (const auto& b : binds) {
    if (b.section != section) {
      section = b.section;
      out += "[" + section + "]\n";
    }
    out += b.key + " = " + b.get() + "\n";
  }
  return out;
}

inline std::string config_hash(const PipelineConfig& cfg) {
  return hex64(fnv1a64(canonical_config_text(cfg)));
}

} // namespace floe
