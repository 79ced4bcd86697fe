#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "floe/error.hpp"

namespace floe {

struct ScatterSeries {
  std::string tag;
  std::vector<double> x, y;
};

// Fig.-4 palette: original input black, LSTM red, CNN blue. Other tags
// (regime coloring of synthetic data) cycle through the fallback palette.
inline std::string series_color(const std::string& tag, std::size_t series_index) {
  if (tag == "original") return "#000000";
  if (tag == "lstm") return "#d62728";
  if (tag == "cnn") return "#1f77b4";
  static const char* palette[] = {"#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return palette[series_index % 5];
}

/// Writes a self-contained scatter SVG, one color and legend entry per
/// series. Output depends only on the inputs, so identical runs produce
/// byte-identical files.
inline void plot_scatter(const std::filesystem::path& path,
                         const std::vector<ScatterSeries>& series, const std::string& title = "") {
  std::size_t total = 0;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw DataError("plot_scatter: x/y length mismatch");
    total += s.x.size();
  }
  if (total == 0) throw DataError("plot_scatter: no points to draw");

  double x_min = 0, x_max = 0, y_min = 0, y_max = 0;
  bool first = true;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        x_min = x_max = s.x[i];
        y_min = y_max = s.y[i];
        first = false;
      } else {
        x_min = std::min(x_min, s.x[i]);
        x_max = std::max(x_max, s.x[i]);
        y_min = std::min(y_min, s.y[i]);
        y_max = std::max(y_max, s.y[i]);
      }
    }
  if (x_max == x_min) x_max = x_min + 1.0;
  if (y_max == y_min) y_max = y_min + 1.0;

  const double width = 840.0, height = 800.0, margin = 50.0;
  const double plot_w = width - 2 * margin, plot_h = height - 2 * margin;
  auto px = [&](double x) { return margin + (x - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return height - margin - (y - y_min) / (y_max - y_min) * plot_h; };
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return std::string(buf);
  };

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open for writing: " + path.string());
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
     << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  os << "<rect x=\"0\" y=\"0\" width=\"" << width << "\" height=\"" << height
     << "\" fill=\"white\"/>\n";
  if (!title.empty())
    os << "<text x=\"" << margin << "\" y=\"30\" font-family=\"sans-serif\" font-size=\"18\">"
       << title << "</text>\n";
  os << "<rect x=\"" << margin << "\" y=\"" << margin << "\" width=\"" << plot_w << "\" height=\""
     << plot_h << "\" fill=\"none\" stroke=\"#888888\"/>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const std::string color = series_color(s.tag, si);
    os << "<g fill=\"" << color << "\" fill-opacity=\"0.55\">\n";
    for (std::size_t i = 0; i < s.x.size(); ++i)
      os << "<circle cx=\"" << fmt(px(s.x[i])) << "\" cy=\"" << fmt(py(s.y[i])) << "\" r=\"2\"/>\n";
    os << "</g>\n";
  }

  // legend markers are rects so a circle count equals the data point count
  for (std::size_t si = 0; si < series.size(); ++si) {
    const double ly = margin + 18.0 + 22.0 * static_cast<double>(si);
    os << "<rect x=\"" << fmt(width - margin - 155.0) << "\" y=\"" << fmt(ly - 10.0)
       << "\" width=\"10\" height=\"10\" fill=\"" << series_color(series[si].tag, si) << "\"/>\n";
    os << "<text x=\"" << fmt(width - margin - 138.0) << "\" y=\"" << fmt(ly)
       << "\" font-family=\"sans-serif\" font-size=\"14\">" << series[si].tag << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw IoError("write failed: " + path.string());
}

} // namespace floe
