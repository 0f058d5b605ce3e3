#include "dwcaps/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dwcaps/errors.hpp"

namespace dwcaps {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b"};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace

void write_line_chart(const std::string& path, const std::vector<double>& x,
                      const std::vector<ChartSeries>& series,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label) {
  if (x.empty() || series.empty()) {
    throw FormatError("write_line_chart: nothing to plot");
  }
  for (const auto& s : series) {
    if (s.y.size() != x.size()) {
      throw FormatError("write_line_chart: series \"" + s.name +
                        "\" length differs from x axis");
    }
  }
  double xmin = x.front(), xmax = x.front();
  for (double v : x) {
    xmin = std::min(xmin, v);
    xmax = std::max(xmax, v);
  }
  double ymin = series[0].y[0], ymax = ymin;
  for (const auto& s : series) {
    for (double v : s.y) {
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  const double width = 640, height = 420;
  const double left = 64, right = 24, top = 36, bottom = 48;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;
  auto sx = [&](double v) { return left + (v - xmin) / (xmax - xmin) * plot_w; };
  auto sy = [&](double v) {
    return top + plot_h - (v - ymin) / (ymax - ymin) * plot_h;
  };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt(width) +
         "\" height=\"" + fmt(height) + "\" viewBox=\"0 0 " + fmt(width) +
         " " + fmt(height) + "\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + fmt(width / 2) + "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">" + title + "</text>\n";

  // axes
  svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top) + "\" x2=\"" +
         fmt(left) + "\" y2=\"" + fmt(top + plot_h) +
         "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(left) + "\" y1=\"" + fmt(top + plot_h) +
         "\" x2=\"" + fmt(left + plot_w) + "\" y2=\"" + fmt(top + plot_h) +
         "\" stroke=\"black\"/>\n";

  for (int t = 0; t <= 5; ++t) {
    const double fx = xmin + (xmax - xmin) * t / 5.0;
    const double fy = ymin + (ymax - ymin) * t / 5.0;
    svg += "<line x1=\"" + fmt(sx(fx)) + "\" y1=\"" + fmt(top + plot_h) +
           "\" x2=\"" + fmt(sx(fx)) + "\" y2=\"" + fmt(top + plot_h + 4) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(sx(fx)) + "\" y=\"" + fmt(top + plot_h + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"10\">" + fmt(fx) + "</text>\n";
    svg += "<line x1=\"" + fmt(left - 4) + "\" y1=\"" + fmt(sy(fy)) +
           "\" x2=\"" + fmt(left) + "\" y2=\"" + fmt(sy(fy)) +
           "\" stroke=\"black\"/>\n";
    svg += "<text x=\"" + fmt(left - 8) + "\" y=\"" + fmt(sy(fy) + 3) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"10\">" + fmt(fy) + "</text>\n";
  }
  svg += "<text x=\"" + fmt(left + plot_w / 2) + "\" y=\"" +
         fmt(height - 10) + "\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"12\">" + x_label +
         "</text>\n";
  svg += "<text x=\"16\" y=\"" + fmt(top + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\" transform=\"rotate(-90 16 " +
         fmt(top + plot_h / 2) + ")\">" + y_label + "</text>\n";

  for (std::size_t i = 0; i < series.size(); ++i) {
    const char* color = kPalette[i % (sizeof(kPalette) / sizeof(*kPalette))];
    std::string points;
    for (std::size_t p = 0; p < x.size(); ++p) {
      points += fmt(sx(x[p])) + "," + fmt(sy(series[i].y[p])) + " ";
    }
    svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
           "\" stroke-width=\"1.5\" points=\"" + points + "\"/>\n";
    const double ly = top + 14 + 16 * static_cast<double>(i);
    svg += "<line x1=\"" + fmt(left + plot_w - 110) + "\" y1=\"" + fmt(ly) +
           "\" x2=\"" + fmt(left + plot_w - 90) + "\" y2=\"" + fmt(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"1.5\"/>\n";
    svg += "<text x=\"" + fmt(left + plot_w - 84) + "\" y=\"" + fmt(ly + 4) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + series[i].name +
           "</text>\n";
  }
  svg += "</svg>\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out << svg;
}

}  // namespace dwcaps
