#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "floe/cluster.hpp"
#include "floe/config.hpp"
#include "floe/error.hpp"
#include "floe/metrics.hpp"
#include "floe/svg.hpp"
#include "floe/synth.hpp"
#include "floe/track.hpp"
#include "floe/train.hpp"
#include "floe/umap.hpp"

namespace floe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

struct MissingInput : Error {
  using Error::Error;
};

inline void require_exists(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInput("missing input: " + path.string());
}

inline PipelineConfig load_config(const std::string& config_path) {
  if (config_path.empty()) return PipelineConfig{};
  require_exists(config_path);
  return parse_config_file(config_path);
}

// A master --seed overrides every per-section seed through fixed streams, so
// one flag pins the entire run.
inline void apply_master_seed(PipelineConfig& cfg, std::optional<std::uint64_t> seed) {
  if (!seed) return;
  cfg.split.seed = derive_seed(*seed, 1);
  cfg.model.train.seed = derive_seed(*seed, 2);
  cfg.umap.umap.seed = derive_seed(*seed, 3);
  cfg.analysis.seed = derive_seed(*seed, 4);
  cfg.synth.seed = derive_seed(*seed, 5);
}

// ---- individual commands ----

inline void cmd_synth(const PipelineConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  const SynthCorpus corpus = generate_corpus(cfg.synth.synth, cfg.synth.seed);
  write_tracks_csv(out_dir / "tracks.csv", corpus.tracks);
  write_labels_csv(out_dir / "labels.csv", corpus);
  std::size_t segments = 0;
  for (const auto& t : corpus.tracks.tracks) segments += t.segments.size();
  std::cout << "synth: " << corpus.tracks.tracks.size() << " tracks, " << segments
            << " segments\n";
}

inline void cmd_ingest(const PipelineConfig& cfg, const fs::path& input, const fs::path& out_dir) {
  require_exists(input);
  fs::create_directories(out_dir);
  const TrackCollection raw = ingest_tracks(input, cfg.data.columns);
  const TrackCollection normalized = normalize_background(raw);
  write_tracks_csv(out_dir / "tracks_normalized.csv", normalized);
  std::cout << "ingest: " << normalized.tracks.size() << " tracks, dropped " << raw.dropped_rows
            << " non-finite rows\n";
}

inline void cmd_split(const PipelineConfig& cfg, const fs::path& input, const fs::path& out_dir) {
  require_exists(input);
  fs::create_directories(out_dir);
  const TrackCollection tc = ingest_tracks(input, cfg.data.columns);
  std::vector<std::string> ids;
  for (const auto& t : tc.tracks) ids.push_back(t.track_id);
  const SplitAssignment split = split_tracks(ids, cfg.split.ratios, cfg.split.seed);
  write_split_csv(out_dir / "split.csv", split);
  std::cout << "split: " << split.train_ids.size() << " train / " << split.val_ids.size()
            << " val / " << split.test_ids.size() << " test tracks\n";
}

namespace detail {

inline TrackCollection select_tracks(const TrackCollection& tc,
                                     const std::vector<std::string>& ids) {
  std::map<std::string, const Track*> by_id;
  for (const auto& t : tc.tracks) by_id[t.track_id] = &t;
  TrackCollection out;
  for (const auto& t : tc.tracks) { // collection order, filtered
    if (std::find(ids.begin(), ids.end(), t.track_id) != ids.end()) out.tracks.push_back(t);
  }
  if (out.tracks.size() != ids.size())
    throw DataError("split references track ids missing from the collection");
  return out;
}

} // namespace detail

inline void cmd_supersegment(const PipelineConfig& cfg, const fs::path& input,
                             const std::optional<fs::path>& split_path, const fs::path& out_dir) {
  require_exists(input);
  fs::create_directories(out_dir);
  const TrackCollection tc = ingest_tracks(input, cfg.data.columns);
  if (split_path) {
    require_exists(*split_path);
    const SplitAssignment split = read_split_csv(*split_path);
    const struct {
      const std::vector<std::string>* ids;
      SplitTag tag;
      const char* file;
    } parts[3] = {{&split.train_ids, SplitTag::train, "train.sseg"},
                  {&split.val_ids, SplitTag::val, "val.sseg"},
                  {&split.test_ids, SplitTag::test, "test.sseg"}};
    for (const auto& part : parts) {
      const SuperSegmentSet set =
          build_supersegment_set(detail::select_tracks(tc, *part.ids), part.tag);
      save_supersegments(out_dir / part.file, set);
      std::cout << "supersegment: " << split_tag_name(part.tag) << " " << set.size()
                << " samples\n";
    }
  } else {
    const SuperSegmentSet set = build_supersegment_set(tc, SplitTag::unsplit);
    save_supersegments(out_dir / "all.sseg", set);
    std::cout << "supersegment: " << set.size() << " samples\n";
  }
}

inline void cmd_train(const PipelineConfig& cfg, Arch arch, const fs::path& train_path,
                      const fs::path& val_path, const fs::path& out_dir) {
  require_exists(train_path);
  require_exists(val_path);
  fs::create_directories(out_dir);

  const SuperSegmentSet train_raw = load_supersegments(train_path, SplitTag::train);
  const SuperSegmentSet val_raw = load_supersegments(val_path, SplitTag::val);
  const FeatureStats stats = compute_stats(train_raw);
  const SuperSegmentSet train_std = standardize(train_raw, stats);
  const SuperSegmentSet val_std = standardize(val_raw, stats);

  ArchConfig ac = cfg.model.arch;
  ac.arch = arch;
  auto [model, report] = fit(train_std, val_std, ac, cfg.model.train);

  const std::string tag = arch_name(arch);
  save_model(*model, stats, out_dir / ("model_" + tag + ".aewt"));
  write_train_report_csv(out_dir / ("train_report_" + tag + ".csv"), report);
  std::cout << "train[" << tag << "]: " << report.train_loss.size() << " epochs, best epoch "
            << report.best_epoch << ", best val loss " << fmt_double_short(report.best_val_loss)
            << (report.stop_reason == StopReason::early_stop ? " (early stop)" : " (max epochs)")
            << "\n";
}

inline void cmd_embed(const PipelineConfig&, const fs::path& model_path, const fs::path& input,
                      const fs::path& out_dir) {
  require_exists(model_path);
  require_exists(input);
  fs::create_directories(out_dir);
  auto [model, stats] = load_model(model_path);
  const SuperSegmentSet raw = load_supersegments(input);
  const SuperSegmentSet std_set = standardize(raw, stats);
  const EmbeddingMatrix em = embed_set(*model, std_set);
  const std::string tag = arch_name(model->config().arch);
  write_embeddings_csv(out_dir / ("embeddings_" + tag + ".csv"), em);
  std::cout << "embed[" << tag << "]: " << em.size() << " x " << em.dim << "\n";
}

namespace detail {

struct UmapInput {
  std::string tag;                      // original | lstm | cnn
  std::size_t dim = 0;
  std::vector<double> matrix;           // row-major n x dim
  std::vector<std::size_t> sample_index; // provenance of each row
};

// raw scheme: flattened standardized 11x4 windows
inline UmapInput umap_input_raw(const SuperSegmentSet& raw_set, std::size_t subsample,
                                std::uint64_t seed) {
  const FeatureStats stats = raw_set.standardized() ? *raw_set.stats : compute_stats(raw_set);
  const SuperSegmentSet std_set = raw_set.standardized() ? raw_set : standardize(raw_set, stats);
  const std::size_t n = std::min(subsample, std_set.size());
  UmapInput in;
  in.tag = "original";
  in.dim = kWindowValues;
  in.sample_index = subsample_indices(std_set.size(), n, seed);
  in.matrix.resize(n * in.dim);
  for (std::size_t r = 0; r < n; ++r) {
    const auto& s = std_set.samples[in.sample_index[r]];
    std::copy(s.values.begin(), s.values.end(), in.matrix.begin() + static_cast<std::ptrdiff_t>(r * in.dim));
  }
  return in;
}

inline UmapInput umap_input_embeddings(const EmbeddingMatrix& em, const std::string& tag,
                                       std::size_t subsample, std::uint64_t seed) {
  const std::size_t n = std::min(subsample, em.size());
  UmapInput in;
  in.tag = tag;
  in.dim = em.dim;
  const auto rows = subsample_indices(em.size(), n, seed);
  in.sample_index.resize(n);
  in.matrix.resize(n * em.dim);
  for (std::size_t r = 0; r < n; ++r) {
    in.sample_index[r] = em.sample_index[rows[r]];
    std::copy(em.row(rows[r]), em.row(rows[r]) + em.dim,
              in.matrix.begin() + static_cast<std::ptrdiff_t>(r * em.dim));
  }
  return in;
}

} // namespace detail

inline void cmd_umap(const PipelineConfig& cfg, const std::string& input_spec,
                     const fs::path& input, const fs::path& out_dir) {
  require_exists(input);
  fs::create_directories(out_dir);

  detail::UmapInput in;
  if (input_spec == "raw") {
    const SuperSegmentSet set = load_supersegments(input);
    in = detail::umap_input_raw(set, cfg.umap.subsample, cfg.umap.umap.seed);
  } else if (input_spec.rfind("embedding:", 0) == 0) {
    const std::string tag = input_spec.substr(10);
    (void)arch_from_string(tag); // validates lstm|cnn
    const EmbeddingMatrix em = read_embeddings_csv(input);
    in = detail::umap_input_embeddings(em, tag, cfg.umap.subsample, cfg.umap.umap.seed);
  } else {
    throw ConfigError("unknown --input '" + input_spec + "' (expected raw or embedding:<arch>)");
  }

  const UmapModel model = umap_fit(in.matrix.data(), in.sample_index.size(), in.dim, cfg.umap.umap);
  write_layout_csv(out_dir / ("layout_" + in.tag + ".csv"), model.layout, in.tag, &in.sample_index);
  std::cout << "umap[" << in.tag << "]: " << in.sample_index.size() << " points from " << in.dim
            << "-d, a=" << fmt_double_short(model.a) << " b=" << fmt_double_short(model.b)
            << (model.init_used == LayoutInit::spectral ? ", spectral init" : ", random init (fallback)")
            << "\n";
}

inline void cmd_metrics(const PipelineConfig& cfg, const std::optional<fs::path>& model_path,
                        const std::optional<fs::path>& input,
                        const std::vector<fs::path>& layouts, const fs::path& out_dir) {
  if (!model_path && layouts.empty())
    throw ConfigError("metrics: nothing to do, pass --model/--in or --layouts");
  fs::create_directories(out_dir);

  if (model_path) {
    if (!input) throw ConfigError("metrics: --model requires --in <file.sseg>");
    require_exists(*model_path);
    require_exists(*input);
    auto [model, stats] = load_model(*model_path);
    const SuperSegmentSet set = load_supersegments(*input, SplitTag::test);
    const FeatureMetrics m = evaluate_reconstruction(*model, stats, set);
    const std::string tag = arch_name(model->config().arch);
    write_metrics(out_dir / ("metrics_" + tag + ".txt"), out_dir / ("metrics_" + tag + ".csv"),
                  tag, m);
    for (int f = 0; f < kNumFeatures; ++f) {
      const auto pairs = reconstruction_pairs(*model, stats, set, f);
      const DensityGrid grid = density_grid(pairs.data(), pairs.size() / 2, cfg.analysis.bins_x,
                                            cfg.analysis.bins_y);
      write_density_csv(out_dir / ("density_" + tag + "_" + feature_name(f) + ".csv"), grid);
    }
    for (int f = 0; f < kNumFeatures; ++f)
      std::cout << "metrics[" << tag << "] " << feature_name(f)
                << ": rmse=" << fmt_double_short(m.rmse[f]) << " r2=" << fmt_double_short(m.r2[f])
                << "\n";
  }

  if (!layouts.empty()) {
    std::ofstream csv(out_dir / "compactness.csv", std::ios::trunc);
    csv << "scheme,silhouette,compactness_ratio\n";
    for (const auto& layout_path : layouts) {
      require_exists(layout_path);
      const LayoutTable t = read_layout_csv(layout_path);
      if (t.x.size() < cfg.analysis.kmeans_k) throw DataError("layout too small for k-means");
      std::vector<double> pts(t.x.size() * 2);
      for (std::size_t i = 0; i < t.x.size(); ++i) {
        pts[i * 2] = t.x[i];
        pts[i * 2 + 1] = t.y[i];
      }
      const auto km = kmeans(pts.data(), t.x.size(), 2, cfg.analysis.kmeans_k, cfg.analysis.seed);
      const double sil = silhouette(pts.data(), t.x.size(), 2, km.assignments);
      const double ratio = compactness_ratio(pts.data(), t.x.size(), 2, km.assignments);
      const std::string scheme = t.source_tag.empty() ? layout_path.stem().string() : t.source_tag[0];
      csv << scheme << ',' << fmt_double(sil) << ',' << fmt_double(ratio) << '\n';
      std::cout << "compactness[" << scheme << "]: silhouette=" << fmt_double_short(sil)
                << " ratio=" << fmt_double_short(ratio) << "\n";
    }
  }
}

inline void cmd_plot(const std::vector<fs::path>& layouts, const std::optional<fs::path>& labels_path,
                     const std::optional<fs::path>& samples_path, const fs::path& out_file) {
  if (layouts.empty()) throw ConfigError("plot: at least one --layouts file required");
  if (out_file.has_parent_path()) fs::create_directories(out_file.parent_path());

  std::vector<ScatterSeries> series;
  if (labels_path) {
    if (layouts.size() != 1 || !samples_path)
      throw ConfigError("plot: label coloring requires exactly one layout and --samples");
    require_exists(*labels_path);
    require_exists(*samples_path);
    const LayoutTable t = read_layout_csv(layouts[0]);
    const SuperSegmentSet set = load_supersegments(*samples_path);

    // labels keyed by (track_id, formatted distance); synth wrote both files
    // from the same doubles so the keys match exactly
    std::map<std::string, std::string> regime_of;
    {
      std::ifstream is(*labels_path);
      std::string line;
      std::getline(is, line); // header
      while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto f = split_csv_line(line);
        if (f.size() != 3) throw DataError("labels file: bad row");
        regime_of[trim(f[0]) + "|" + trim(f[1])] = trim(f[2]);
      }
    }
    std::map<std::string, ScatterSeries> by_regime;
    for (std::size_t i = 0; i < t.x.size(); ++i) {
      const auto& s = set.samples.at(t.sample_index[i]);
      const std::string key =
          set.track_ids[s.track_index] + "|" + fmt_double(s.center_distance);
      const auto it = regime_of.find(key);
      const std::string regime = it == regime_of.end() ? "unknown" : it->second;
      auto& sr = by_regime[regime];
      sr.tag = regime;
      sr.x.push_back(t.x[i]);
      sr.y.push_back(t.y[i]);
    }
    for (auto& [_, sr] : by_regime) series.push_back(std::move(sr));
  } else {
    for (const auto& p : layouts) {
      require_exists(p);
      const LayoutTable t = read_layout_csv(p);
      ScatterSeries sr;
      sr.tag = t.source_tag.empty() || t.source_tag[0].empty() ? p.stem().string() : t.source_tag[0];
      sr.x = t.x;
      sr.y = t.y;
      series.push_back(std::move(sr));
    }
  }
  plot_scatter(out_file, series);
  std::cout << "plot: " << series.size() << " series -> " << out_file.string() << "\n";
}

// ---- pipeline ----

inline void cmd_pipeline(const PipelineConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  json manifest;
  manifest["command"] = "pipeline";
  manifest["config_hash"] = config_hash(cfg);
  manifest["seeds"] = {{"split", cfg.split.seed},
                       {"model", cfg.model.train.seed},
                       {"umap", cfg.umap.umap.seed},
                       {"analysis", cfg.analysis.seed},
                       {"synth", cfg.synth.seed}};
  std::vector<std::string> stages;
  std::vector<fs::path> outputs;
  auto track_output = [&](const fs::path& p) { outputs.push_back(p); };

  // data; the manifest records the generated corpus by bare name so two
  // runs into different directories still produce identical manifests
  fs::path tracks_src;
  if (cfg.data.path.empty()) {
    const SynthCorpus corpus = generate_corpus(cfg.synth.synth, cfg.synth.seed);
    write_tracks_csv(out_dir / "tracks.csv", corpus.tracks);
    write_labels_csv(out_dir / "labels.csv", corpus);
    track_output(out_dir / "tracks.csv");
    track_output(out_dir / "labels.csv");
    tracks_src = out_dir / "tracks.csv";
    stages.push_back("synth");
    manifest["inputs"] = {{"tracks", "tracks.csv"}};
  } else {
    tracks_src = cfg.data.path;
    require_exists(tracks_src);
    manifest["inputs"] = {{"tracks", cfg.data.path}};
  }

  // ingest + per-track background normalization
  const TrackCollection raw_tracks = ingest_tracks(tracks_src, cfg.data.columns);
  const TrackCollection tracks = normalize_background(raw_tracks);
  write_tracks_csv(out_dir / "tracks_normalized.csv", tracks);
  track_output(out_dir / "tracks_normalized.csv");
  stages.push_back("ingest");

  // track-exclusive split
  std::vector<std::string> ids;
  for (const auto& t : tracks.tracks) ids.push_back(t.track_id);
  const SplitAssignment split = split_tracks(ids, cfg.split.ratios, cfg.split.seed);
  write_split_csv(out_dir / "split.csv", split);
  track_output(out_dir / "split.csv");
  stages.push_back("split");

  // super-segments per split
  const SuperSegmentSet train_raw =
      build_supersegment_set(detail::select_tracks(tracks, split.train_ids), SplitTag::train);
  const SuperSegmentSet val_raw =
      build_supersegment_set(detail::select_tracks(tracks, split.val_ids), SplitTag::val);
  const SuperSegmentSet test_raw =
      build_supersegment_set(detail::select_tracks(tracks, split.test_ids), SplitTag::test);
  save_supersegments(out_dir / "train.sseg", train_raw);
  save_supersegments(out_dir / "val.sseg", val_raw);
  save_supersegments(out_dir / "test.sseg", test_raw);
  for (const char* f : {"train.sseg", "val.sseg", "test.sseg"}) track_output(out_dir / f);
  stages.push_back("supersegment");
  manifest["counts"] = {{"tracks", tracks.tracks.size()},
                        {"dropped_rows", raw_tracks.dropped_rows},
                        {"train_samples", train_raw.size()},
                        {"val_samples", val_raw.size()},
                        {"test_samples", test_raw.size()}};
  std::cout << "pipeline: " << train_raw.size() << "/" << val_raw.size() << "/" << test_raw.size()
            << " train/val/test super-segments\n";

  const FeatureStats stats = compute_stats(train_raw);
  const SuperSegmentSet train_std = standardize(train_raw, stats);
  const SuperSegmentSet val_std = standardize(val_raw, stats);

  // both architectures
  std::map<std::string, EmbeddingMatrix> embeddings;
  for (const Arch arch : {Arch::lstm, Arch::cnn}) {
    const std::string tag = arch_name(arch);
    ArchConfig ac = cfg.model.arch;
    ac.arch = arch;
    TrainConfig tc = cfg.model.train;
    tc.seed = derive_seed(cfg.model.train.seed, static_cast<std::uint64_t>(arch));
    auto [model, report] = fit(train_std, val_std, ac, tc);
    save_model(*model, stats, out_dir / ("model_" + tag + ".aewt"));
    write_train_report_csv(out_dir / ("train_report_" + tag + ".csv"), report);
    track_output(out_dir / ("model_" + tag + ".aewt"));
    track_output(out_dir / ("train_report_" + tag + ".csv"));
    std::cout << "pipeline: trained " << tag << " for " << report.train_loss.size()
              << " epochs, best val loss " << fmt_double_short(report.best_val_loss) << "\n";

    const FeatureMetrics m = evaluate_reconstruction(*model, stats, test_raw);
    write_metrics(out_dir / ("metrics_" + tag + ".txt"), out_dir / ("metrics_" + tag + ".csv"),
                  tag, m);
    track_output(out_dir / ("metrics_" + tag + ".txt"));
    track_output(out_dir / ("metrics_" + tag + ".csv"));
    for (int f = 0; f < kNumFeatures; ++f) {
      const auto pairs = reconstruction_pairs(*model, stats, test_raw, f);
      const DensityGrid grid = density_grid(pairs.data(), pairs.size() / 2, cfg.analysis.bins_x,
                                            cfg.analysis.bins_y);
      const fs::path p = out_dir / ("density_" + tag + "_" + feature_name(f) + ".csv");
      write_density_csv(p, grid);
      track_output(p);
    }

    const EmbeddingMatrix em = embed_set(*model, train_std);
    write_embeddings_csv(out_dir / ("embeddings_" + tag + ".csv"), em);
    track_output(out_dir / ("embeddings_" + tag + ".csv"));
    embeddings.emplace(tag, em);
  }
  stages.push_back("train");
  stages.push_back("metrics");
  stages.push_back("embed");

  // UMAP: the three comparison schemes share the subsample and the seed
  const std::size_t n_sub = std::min(cfg.umap.subsample, train_std.size());
  const std::vector<std::size_t> sub_idx =
      subsample_indices(train_std.size(), n_sub, cfg.umap.umap.seed);

  struct Scheme {
    std::string tag;
    std::size_t dim;
    std::vector<double> matrix;
  };
  std::vector<Scheme> schemes;
  {
    Scheme raw{"original", kWindowValues, {}};
    raw.matrix.resize(n_sub * raw.dim);
    for (std::size_t r = 0; r < n_sub; ++r) {
      const auto& s = train_std.samples[sub_idx[r]];
      std::copy(s.values.begin(), s.values.end(),
                raw.matrix.begin() + static_cast<std::ptrdiff_t>(r * raw.dim));
    }
    schemes.push_back(std::move(raw));
    for (const auto& [tag, em] : embeddings) {
      Scheme s{tag, em.dim, {}};
      s.matrix.resize(n_sub * em.dim);
      for (std::size_t r = 0; r < n_sub; ++r)
        std::copy(em.row(sub_idx[r]), em.row(sub_idx[r]) + em.dim,
                  s.matrix.begin() + static_cast<std::ptrdiff_t>(r * em.dim));
      schemes.push_back(std::move(s));
    }
  }

  // layouts at the base seed, then compactness over repeated seeds
  std::ofstream cmp_csv(out_dir / "compactness.csv", std::ios::trunc);
  cmp_csv << "scheme,seed_index,silhouette,compactness_ratio\n";
  std::map<std::string, std::vector<double>> ratios;
  std::vector<fs::path> layout_files;
  for (std::size_t s = 0; s < std::max<std::size_t>(1, cfg.analysis.compactness_seeds); ++s) {
    UmapConfig ucfg = cfg.umap.umap;
    ucfg.seed = s == 0 ? cfg.umap.umap.seed : derive_seed(cfg.umap.umap.seed, s);
    for (const auto& scheme : schemes) {
      const UmapModel um = umap_fit(scheme.matrix.data(), n_sub, scheme.dim, ucfg);
      if (s == 0) {
        const fs::path p = out_dir / ("layout_" + scheme.tag + ".csv");
        write_layout_csv(p, um.layout, scheme.tag, &sub_idx);
        layout_files.push_back(p);
        track_output(p);
      }
      const auto km = kmeans(um.layout.xy.data(), n_sub, 2, cfg.analysis.kmeans_k,
                             derive_seed(cfg.analysis.seed, s));
      const double sil = silhouette(um.layout.xy.data(), n_sub, 2, km.assignments);
      const double ratio = compactness_ratio(um.layout.xy.data(), n_sub, 2, km.assignments);
      ratios[scheme.tag].push_back(ratio);
      cmp_csv << scheme.tag << ',' << s << ',' << fmt_double(sil) << ',' << fmt_double(ratio)
              << '\n';
    }
  }
  cmp_csv.close();
  track_output(out_dir / "compactness.csv");
  stages.push_back("umap");

  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  json cmp_medians;
  for (auto& [tag, r] : ratios) cmp_medians[tag] = median(r);
  manifest["compactness_ratio_median"] = cmp_medians;
  {
    std::ofstream txt(out_dir / "compactness.txt", std::ios::trunc);
    for (auto& [tag, r] : ratios)
      txt << "compactness_ratio_median." << tag << " = " << fmt_double(median(r)) << '\n';
    track_output(out_dir / "compactness.txt");
  }
  for (auto& [tag, r] : ratios)
    std::cout << "pipeline: median compactness ratio " << tag << " = "
              << fmt_double_short(median(r)) << "\n";

  // combined Fig.-4-style scatter
  {
    std::vector<ScatterSeries> series;
    for (const auto& p : layout_files) {
      const LayoutTable t = read_layout_csv(p);
      ScatterSeries sr;
      sr.tag = t.source_tag[0];
      sr.x = t.x;
      sr.y = t.y;
      series.push_back(std::move(sr));
    }
    plot_scatter(out_dir / "scatter.svg", series);
    track_output(out_dir / "scatter.svg");
  }
  stages.push_back("plot");

  manifest["stages"] = stages;
  json out_json;
  for (const auto& p : outputs) out_json[p.filename().string()] = hex64(file_checksum(p));
  manifest["outputs"] = out_json;
  std::ofstream mf(out_dir / "manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << '\n';
  std::cout << "pipeline: wrote " << (out_dir / "manifest.json").string() << "\n";
}

// ---- argument parsing ----

inline int run(int argc, const char* const* argv) {
  CLI::App app{"Sea-ice altimetry embedding pipeline: super-segments, sequence autoencoders "
               "and UMAP projection"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> master_seed;
  app.add_option("--config", config_path, "Pipeline config file (sectioned key = value)");
  app.add_option("--seed", master_seed, "Master seed overriding every per-section seed");

  std::string in_path, out_dir = ".", arch_str = "", input_spec = "raw";
  std::string model_path, train_path, val_path, split_path, labels_path, samples_path, out_file;
  std::vector<std::string> layout_paths;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled track corpus");
  synth->add_option("--out", out_dir, "Output directory")->required();

  auto* ingest = app.add_subcommand("ingest", "Read a track CSV and normalize background rates");
  ingest->add_option("--in", in_path, "Track CSV")->required();
  ingest->add_option("--out", out_dir, "Output directory")->required();

  auto* split = app.add_subcommand("split", "Track-exclusive train/val/test split");
  split->add_option("--in", in_path, "Track CSV")->required();
  split->add_option("--out", out_dir, "Output directory")->required();

  auto* sseg = app.add_subcommand("supersegment", "Build 11-point interpolated windows");
  sseg->add_option("--in", in_path, "Track CSV")->required();
  sseg->add_option("--split", split_path, "split.csv from the split command");
  sseg->add_option("--out", out_dir, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train an autoencoder");
  train->add_option("--arch", arch_str, "lstm or cnn")->required();
  train->add_option("--train", train_path, "train.sseg")->required();
  train->add_option("--val", val_path, "val.sseg")->required();
  train->add_option("--out", out_dir, "Output directory")->required();

  auto* embed = app.add_subcommand("embed", "Extract bottleneck embeddings");
  embed->add_option("--model", model_path, "Model file (.aewt)")->required();
  embed->add_option("--in", in_path, "Input .sseg")->required();
  embed->add_option("--out", out_dir, "Output directory")->required();

  auto* umap = app.add_subcommand("umap", "Project to 2-D with UMAP");
  umap->add_option("--input", input_spec, "raw or embedding:<arch>")->required();
  umap->add_option("--in", in_path, "Input file (.sseg for raw, embeddings CSV otherwise)")
      ->required();
  umap->add_option("--out", out_dir, "Output directory")->required();

  auto* metrics = app.add_subcommand("metrics", "Reconstruction metrics and cluster compactness");
  metrics->add_option("--model", model_path, "Model file (.aewt)");
  metrics->add_option("--in", in_path, "Evaluation .sseg");
  metrics->add_option("--layouts", layout_paths, "Layout CSVs for compactness analysis");
  metrics->add_option("--out", out_dir, "Output directory")->required();

  auto* plot = app.add_subcommand("plot", "Render layout CSVs as an SVG scatter");
  plot->add_option("--layouts", layout_paths, "Layout CSVs")->required();
  plot->add_option("--labels", labels_path, "Synthetic regime labels CSV");
  plot->add_option("--samples", samples_path, "The .sseg the layout points came from");
  plot->add_option("--out", out_file, "Output SVG path")->required();

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");
  pipeline->add_option("--out", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    PipelineConfig cfg = load_config(config_path);
    apply_master_seed(cfg, master_seed);

    if (synth->parsed()) cmd_synth(cfg, out_dir);
    else if (ingest->parsed()) cmd_ingest(cfg, in_path, out_dir);
    else if (split->parsed()) cmd_split(cfg, in_path, out_dir);
    else if (sseg->parsed())
      cmd_supersegment(cfg, in_path,
                       split_path.empty() ? std::nullopt : std::optional<fs::path>(split_path),
                       out_dir);
    else if (train->parsed()) cmd_train(cfg, arch_from_string(arch_str), train_path, val_path, out_dir);
    else if (embed->parsed()) cmd_embed(cfg, model_path, in_path, out_dir);
    else if (umap->parsed()) cmd_umap(cfg, input_spec, in_path, out_dir);
    else if (metrics->parsed()) {
      std::vector<fs::path> layouts(layout_paths.begin(), layout_paths.end());
      cmd_metrics(cfg, model_path.empty() ? std::nullopt : std::optional<fs::path>(model_path),
                  in_path.empty() ? std::nullopt : std::optional<fs::path>(in_path), layouts,
                  out_dir);
    } else if (plot->parsed()) {
      std::vector<fs::path> layouts(layout_paths.begin(), layout_paths.end());
      cmd_plot(layouts, labels_path.empty() ? std::nullopt : std::optional<fs::path>(labels_path),
               samples_path.empty() ? std::nullopt : std::optional<fs::path>(samples_path),
               out_file);
    } else if (pipeline->parsed()) cmd_pipeline(cfg, out_dir);
  } catch (const MissingInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("floe");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

} // namespace floe::cli
