#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "obsforge/common.hpp"

namespace obsforge::svg {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct ChartOptions {
  std::string title;
  std::string x_label = "t";
  std::string y_label;
  bool log_y = false;
  int width = 800;
  int height = 420;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
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

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

}  // namespace detail

/// Renders the series as polylines on shared axes. Output depends only on the inputs.
inline std::string line_chart(const std::vector<Series>& series, const ChartOptions& opt = {}) {
  require(!series.empty(), "svg: no series to plot");
  double xmin = INFINITY, xmax = -INFINITY, ymin = INFINITY, ymax = -INFINITY;
  auto ty = [&](double v) { return opt.log_y ? std::log10(std::max(v, 1e-300)) : v; };
  for (const auto& s : series) {
    require(s.x.size() == s.y.size(), "svg: series '" + s.name + "' has mismatched x and y");
    require(!s.x.empty(), "svg: series '" + s.name + "' is empty");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  }
  require(std::isfinite(xmin) && std::isfinite(ymin), "svg: no finite data points");
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) {
    ymin -= 0.5;
    ymax += 0.5;
  }

  const double left = 70, right = 150, top = 40, bottom = 50;
  const double pw = opt.width - left - right, ph = opt.height - top - bottom;
  auto px = [&](double v) { return left + (v - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double v) { return top + (1.0 - (ty(v) - ymin) / (ymax - ymin)) * ph; };
  auto py_raw = [&](double v) { return top + (1.0 - (v - ymin) / (ymax - ymin)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.width << "\" height=\"" << opt.height
    << "\" viewBox=\"0 0 " << opt.width << ' ' << opt.height << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opt.title.empty())
    o << "<text x=\"" << detail::fmt(left + pw / 2) << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"15\">" << detail::escape(opt.title) << "</text>\n";
  o << "<rect x=\"" << detail::fmt(left) << "\" y=\"" << detail::fmt(top) << "\" width=\"" << detail::fmt(pw)
    << "\" height=\"" << detail::fmt(ph) << "\" fill=\"none\" stroke=\"black\"/>\n";

  for (int k = 0; k <= 5; ++k) {
    const double xv = xmin + (xmax - xmin) * k / 5.0;
    const double yv = ymin + (ymax - ymin) * k / 5.0;
    o << "<text x=\"" << detail::fmt(px(xv)) << "\" y=\"" << detail::fmt(top + ph + 18)
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << detail::tick_label(xv)
      << "</text>\n";
    const std::string ylab = opt.log_y ? "1e" + detail::tick_label(yv) : detail::tick_label(yv);
    o << "<text x=\"" << detail::fmt(left - 6) << "\" y=\"" << detail::fmt(py_raw(yv) + 4)
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << ylab << "</text>\n";
    o << "<line x1=\"" << detail::fmt(left) << "\" y1=\"" << detail::fmt(py_raw(yv)) << "\" x2=\""
      << detail::fmt(left + pw) << "\" y2=\"" << detail::fmt(py_raw(yv)) << "\" stroke=\"#dddddd\"/>\n";
  }
  o << "<text x=\"" << detail::fmt(left + pw / 2) << "\" y=\"" << detail::fmt(opt.height - 10.0)
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << detail::escape(opt.x_label)
    << "</text>\n";
  if (!opt.y_label.empty())
    o << "<text x=\"16\" y=\"" << detail::fmt(top + ph / 2) << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
      << "font-size=\"12\" transform=\"rotate(-90 16 " << detail::fmt(top + ph / 2) << ")\">"
      << detail::escape(opt.y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    o << "<polyline fill=\"none\" stroke=\"" << detail::color(si) << "\" stroke-width=\"1.5\"";
    if (s.dashed) o << " stroke-dasharray=\"6 4\"";
    o << " points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!first) o << ' ';
      o << detail::fmt(px(s.x[i])) << ',' << detail::fmt(py(s.y[i]));
      first = false;
    }
    o << "\"/>\n";
    const double ly = top + 14 + 18.0 * static_cast<double>(si);
    o << "<line x1=\"" << detail::fmt(left + pw + 10) << "\" y1=\"" << detail::fmt(ly - 4) << "\" x2=\""
      << detail::fmt(left + pw + 34) << "\" y2=\"" << detail::fmt(ly - 4) << "\" stroke=\"" << detail::color(si)
      << "\" stroke-width=\"2\"" << (s.dashed ? " stroke-dasharray=\"6 4\"" : "") << "/>\n";
    o << "<text x=\"" << detail::fmt(left + pw + 40) << "\" y=\"" << detail::fmt(ly)
      << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace obsforge::svg
