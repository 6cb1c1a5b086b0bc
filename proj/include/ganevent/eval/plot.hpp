#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "ganevent/core/error.hpp"

namespace ganevent::eval {

struct PlotLine {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color = "#1f77b4";
};

struct PlotMarkers {
  std::vector<double> x;
  std::string color = "#d62728";
};

namespace detail {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace detail

/// Plain SVG line chart with a legend; vertical markers flag days of interest.
inline std::string svg_line_chart(const std::string& title, const std::vector<PlotLine>& lines,
                                  const PlotMarkers& markers = {}, double width = 960, double height = 360) {
  require(!lines.empty(), "plot needs at least one line");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& l : lines) {
    require(l.x.size() == l.y.size(), "plot line '" + l.label + "' has mismatched x and y");
    for (double v : l.x) x0 = std::min(x0, v), x1 = std::max(x1, v);
    for (double v : l.y)
      if (std::isfinite(v)) y0 = std::min(y0, v), y1 = std::max(y1, v);
  }
  require(std::isfinite(x0) && std::isfinite(y0), "plot has no finite points");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y1 = y0 + 1;
  const double left = 60, right = 20, top = 30, bottom = 30;
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (width - left - right); };
  auto py = [&](double y) { return top + (y1 - y) / (y1 - y0) * (height - top - bottom); };

  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::num(width) + "\" height=\"" +
                    detail::num(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg += "<text x=\"" + detail::num(left) + "\" y=\"18\" font-size=\"13\">" + detail::escape_xml(title) + "</text>\n";
  svg += "<line x1=\"" + detail::num(left) + "\" y1=\"" + detail::num(height - bottom) + "\" x2=\"" +
         detail::num(width - right) + "\" y2=\"" + detail::num(height - bottom) + "\" stroke=\"#888\"/>\n";
  svg += "<line x1=\"" + detail::num(left) + "\" y1=\"" + detail::num(top) + "\" x2=\"" + detail::num(left) +
         "\" y2=\"" + detail::num(height - bottom) + "\" stroke=\"#888\"/>\n";
  svg += "<text x=\"4\" y=\"" + detail::num(top + 4) + "\">" + detail::num(y1) + "</text>\n";
  svg += "<text x=\"4\" y=\"" + detail::num(height - bottom) + "\">" + detail::num(y0) + "</text>\n";
  for (double x : markers.x)
    svg += "<line x1=\"" + detail::num(px(x)) + "\" y1=\"" + detail::num(top) + "\" x2=\"" + detail::num(px(x)) +
           "\" y2=\"" + detail::num(height - bottom) + "\" stroke=\"" + markers.color + "\" stroke-opacity=\"0.35\"/>\n";
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    svg += "<polyline fill=\"none\" stroke-width=\"1\" stroke=\"" + l.color + "\" points=\"";
    for (std::size_t j = 0; j < l.x.size(); ++j)
      if (std::isfinite(l.y[j])) svg += detail::num(px(l.x[j])) + "," + detail::num(py(l.y[j])) + " ";
    svg += "\"/>\n";
    const double ly = top + 14.0 * static_cast<double>(i);
    svg += "<text x=\"" + detail::num(width - right - 150) + "\" y=\"" + detail::num(ly + 10) + "\" fill=\"" + l.color +
           "\">" + detail::escape_xml(l.label) + "</text>\n";
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ganevent::eval
