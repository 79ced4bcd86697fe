#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "floe/cli.hpp"
#include "floe/config.hpp"

using namespace floe;
namespace fs = std::filesystem;

namespace {

fs::path test_dir() {
  const fs::path p = fs::temp_directory_path() / "floe_cli_test";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream os(p, std::ios::trunc);
  os << content;
}

} // namespace

TEST_CASE("config: defaults carry the production constants") {
  const PipelineConfig cfg = parse_config_text("");
  CHECK(cfg.split.ratios.train == 0.7);
  CHECK(cfg.split.ratios.val == 0.1);
  CHECK(cfg.split.ratios.test == 0.2);
  CHECK(cfg.model.arch.enc1 == 32);
  CHECK(cfg.model.arch.enc2 == 64);
  CHECK(cfg.model.arch.bottleneck == 16);
  CHECK(cfg.model.arch.dec1 == 64);
  CHECK(cfg.model.arch.dec2 == 32);
  CHECK(cfg.model.arch.dropout_p == 0.2);
  CHECK(cfg.model.train.max_epochs == 1000);
  CHECK(cfg.model.train.batch_size == 1024);
  CHECK(cfg.model.train.patience == 20);
  CHECK(cfg.model.train.learning_rate == 1e-3);
  CHECK(cfg.umap.umap.n_neighbors == 50);
  CHECK(cfg.umap.umap.min_dist == 0.0001);
  CHECK(cfg.umap.umap.negative_sample_rate == 5.0);
  CHECK(cfg.umap.subsample == 100000);
  CHECK(cfg.analysis.kmeans_k == 3);
}

TEST_CASE("config: parsing, overrides, unknown keys") {
  const PipelineConfig cfg = parse_config_text(
      "# comment\n"
      "[model]\n"
      "arch = cnn\n"
      "max_epochs = 12\n"
      "[umap]\n"
      "n_neighbors = 9\n");
  CHECK(cfg.model.arch.arch == Arch::cnn);
  CHECK(cfg.model.train.max_epochs == 12);
  CHECK(cfg.umap.umap.n_neighbors == 9);

  CHECK_THROWS_WITH_AS(parse_config_text("[model]\nbogus = 1\n"),
                       doctest::Contains("model.bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text("[nosuch]\nx = 1\n"), doctest::Contains("nosuch"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config_text("key = 1\n"), ConfigError); // outside a section
  CHECK_THROWS_AS(parse_config_text("[model]\nmax_epochs = banana\n"), ConfigError);

  // canonical text parses back to the same hash
  const std::string canon = canonical_config_text(cfg);
  const PipelineConfig cfg2 = parse_config_text(canon);
  CHECK(config_hash(cfg) == config_hash(cfg2));
}

TEST_CASE("cli: exit codes for config and missing-input errors") {
  const fs::path dir = test_dir();
  write_file(dir / "bad.cfg", "[model]\nnot_a_key = 3\n");
  CHECK(cli::run({"--config", (dir / "bad.cfg").string(), "synth", "--out", dir.string()}) == 2);

  CHECK(cli::run({"ingest", "--in", (dir / "nope.csv").string(), "--out", dir.string()}) == 3);
  CHECK(cli::run({"--config", (dir / "nocfg.cfg").string(), "synth", "--out", dir.string()}) == 3);
}

TEST_CASE("cli: full command flow on a tiny corpus") {
  const fs::path dir = test_dir() / "flow";
  fs::create_directories(dir);
  write_file(dir / "c.cfg",
             "[synth]\n"
             "n_tracks = 8\n"
             "track_length_m = 4000\n"
             "[model]\n"
             "enc1 = 6\nenc2 = 8\nbottleneck = 4\ndec1 = 8\ndec2 = 6\n"
             "max_epochs = 6\npatience = 5\n"
             "[umap]\n"
             "n_neighbors = 12\nn_epochs = 60\nsubsample = 150\n"
             "[analysis]\n"
             "compactness_seeds = 1\n");
  const std::string cfg_flag = (dir / "c.cfg").string();

  CHECK(cli::run({"--config", cfg_flag, "synth", "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "tracks.csv"));
  CHECK(fs::exists(dir / "labels.csv"));

  CHECK(cli::run({"--config", cfg_flag, "ingest", "--in", (dir / "tracks.csv").string(), "--out",
                  dir.string()}) == 0);
  CHECK(fs::exists(dir / "tracks_normalized.csv"));

  CHECK(cli::run({"--config", cfg_flag, "split", "--in",
                  (dir / "tracks_normalized.csv").string(), "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "split.csv"));

  CHECK(cli::run({"--config", cfg_flag, "supersegment", "--in",
                  (dir / "tracks_normalized.csv").string(), "--split",
                  (dir / "split.csv").string(), "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "train.sseg"));
  CHECK(fs::exists(dir / "val.sseg"));
  CHECK(fs::exists(dir / "test.sseg"));

  for (const std::string arch : {"lstm", "cnn"}) {
    CHECK(cli::run({"--config", cfg_flag, "train", "--arch", arch, "--train",
                    (dir / "train.sseg").string(), "--val", (dir / "val.sseg").string(), "--out",
                    dir.string()}) == 0);
    CHECK(fs::exists(dir / ("model_" + arch + ".aewt")));
    CHECK(fs::exists(dir / ("train_report_" + arch + ".csv")));

    CHECK(cli::run({"--config", cfg_flag, "embed", "--model",
                    (dir / ("model_" + arch + ".aewt")).string(), "--in",
                    (dir / "train.sseg").string(), "--out", dir.string()}) == 0);
    CHECK(fs::exists(dir / ("embeddings_" + arch + ".csv")));
  }

  // the three schemes of the comparison
  CHECK(cli::run({"--config", cfg_flag, "umap", "--input", "raw", "--in",
                  (dir / "train.sseg").string(), "--out", dir.string()}) == 0);
  CHECK(cli::run({"--config", cfg_flag, "umap", "--input", "embedding:lstm", "--in",
                  (dir / "embeddings_lstm.csv").string(), "--out", dir.string()}) == 0);
  CHECK(cli::run({"--config", cfg_flag, "umap", "--input", "embedding:cnn", "--in",
                  (dir / "embeddings_cnn.csv").string(), "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "layout_original.csv"));
  CHECK(fs::exists(dir / "layout_lstm.csv"));
  CHECK(fs::exists(dir / "layout_cnn.csv"));

  CHECK(cli::run({"--config", cfg_flag, "metrics", "--model",
                  (dir / "model_cnn.aewt").string(), "--in", (dir / "test.sseg").string(),
                  "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "metrics_cnn.txt"));
  CHECK(fs::exists(dir / "density_cnn_height.csv"));

  CHECK(cli::run({"--config", cfg_flag, "metrics", "--layouts",
                  (dir / "layout_original.csv").string(), (dir / "layout_lstm.csv").string(),
                  (dir / "layout_cnn.csv").string(), "--out", dir.string()}) == 0);
  CHECK(fs::exists(dir / "compactness.csv"));

  CHECK(cli::run({"--config", cfg_flag, "plot", "--layouts",
                  (dir / "layout_original.csv").string(), (dir / "layout_lstm.csv").string(),
                  (dir / "layout_cnn.csv").string(), "--out", (dir / "scatter.svg").string()}) ==
        0);
  REQUIRE(fs::exists(dir / "scatter.svg"));

  // parse-back: one circle per layout row, three legend entries
  const std::string svg = slurp(dir / "scatter.svg");
  std::size_t circles = 0, legends = 0;
  for (std::size_t pos = 0; (pos = svg.find("<circle", pos)) != std::string::npos; ++pos) ++circles;
  for (std::size_t pos = 0; (pos = svg.find("<text", pos)) != std::string::npos; ++pos) ++legends;
  std::size_t rows = 0;
  for (const std::string layout : {"layout_original.csv", "layout_lstm.csv", "layout_cnn.csv"}) {
    std::ifstream is(dir / layout);
    std::string line;
    std::getline(is, line);
    while (std::getline(is, line)) rows += !line.empty();
  }
  CHECK(circles == rows);
  CHECK(legends == 3);

  // crude XML well-formedness: every opened tag closes
  std::size_t opens = 0, closes = 0, self_closes = 0;
  for (std::size_t pos = 0; (pos = svg.find('<', pos)) != std::string::npos; ++pos)
    opens += svg[pos + 1] != '/' && svg[pos + 1] != '?';
  for (std::size_t pos = 0; (pos = svg.find("</", pos)) != std::string::npos; ++pos) ++closes;
  for (std::size_t pos = 0; (pos = svg.find("/>", pos)) != std::string::npos; ++pos) ++self_closes;
  CHECK(opens == closes + self_closes);

  // regime-colored plot
  CHECK(cli::run({"--config", cfg_flag, "plot", "--layouts",
                  (dir / "layout_original.csv").string(), "--labels",
                  (dir / "labels.csv").string(), "--samples", (dir / "train.sseg").string(),
                  "--out", (dir / "scatter_regimes.svg").string()}) == 0);
  const std::string svg2 = slurp(dir / "scatter_regimes.svg");
  CHECK(svg2.find("water") != std::string::npos);

  fs::remove_all(dir);
}

TEST_CASE("cli: pipeline writes a manifest that accounts for every output") {
  const fs::path dir = test_dir() / "pipe";
  fs::create_directories(dir);
  write_file(dir / "p.cfg",
             "[synth]\n"
             "n_tracks = 6\n"
             "track_length_m = 3000\n"
             "[model]\n"
             "enc1 = 4\nenc2 = 6\nbottleneck = 3\ndec1 = 6\ndec2 = 4\n"
             "max_epochs = 4\npatience = 3\n"
             "[umap]\n"
             "n_neighbors = 10\nn_epochs = 40\nsubsample = 120\n"
             "[analysis]\n"
             "compactness_seeds = 1\n");
  CHECK(cli::run({"--config", (dir / "p.cfg").string(), "--seed", "7", "pipeline", "--out",
                  (dir / "run").string()}) == 0);

  REQUIRE(fs::exists(dir / "run" / "manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "run" / "manifest.json"));
  CHECK(manifest["command"] == "pipeline");
  CHECK(manifest.contains("config_hash"));
  CHECK(manifest["counts"]["tracks"] == 6);
  for (const auto& [name, checksum] : manifest["outputs"].items()) {
    CHECK(fs::exists(dir / "run" / name));
    CHECK(hex64(file_checksum(dir / "run" / name)) == checksum.get<std::string>());
  }
  CHECK(fs::exists(dir / "run" / "scatter.svg"));
  CHECK(fs::exists(dir / "run" / "compactness.csv"));
  fs::remove_all(dir);
}
