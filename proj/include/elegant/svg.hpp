#pragma once

// Dependency-free SVG bar and line plots for histograms and sweep trends.

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "elegant/metrics.hpp"

namespace elegant {

namespace detail {

inline std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

}  // namespace detail

struct SvgSeries {
  std::string label;
  std::string color;  // e.g. "#3366cc"
  Histogram hist;
};

inline void write_histogram_svg(const std::vector<SvgSeries>& series, const std::string& title,
                                const std::string& path) {
  if (series.empty()) throw Error("write_histogram_svg: no series");
  const double W = 640, H = 400, ml = 50, mr = 15, mt = 30, mb = 35;
  double lo = series[0].hist.edges.front(), hi = series[0].hist.edges.back();
  int max_count = 1;
  for (const auto& s : series) {
    lo = std::min(lo, s.hist.edges.front());
    hi = std::max(hi, s.hist.edges.back());
    for (int c : s.hist.counts) max_count = std::max(max_count, c);
  }
  auto px = [&](double x) { return ml + (x - lo) / (hi - lo) * (W - ml - mr); };
  auto py = [&](double c) { return H - mb - c / max_count * (H - mt - mb); };

  std::ofstream out(path);
  if (!out) throw Error("cannot open SVG for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  for (const auto& s : series) {
    for (size_t b = 0; b < s.hist.counts.size(); ++b) {
      const double x0 = px(s.hist.edges[b]);
      const double x1 = px(s.hist.edges[b + 1]);
      const double y = py(s.hist.counts[b]);
      out << "<rect x=\"" << detail::fmt(x0) << "\" y=\"" << detail::fmt(y) << "\" width=\""
          << detail::fmt(std::max(0.5, x1 - x0)) << "\" height=\""
          << detail::fmt(H - mb - y) << "\" fill=\"" << s.color << "\" fill-opacity=\"0.45\"/>\n";
    }
  }
  // axes and edge labels
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << ml << "\" y=\"" << H - mb + 16 << "\" font-size=\"11\">"
      << detail::fmt(lo) << "</text>\n";
  out << "<text x=\"" << W - mr << "\" y=\"" << H - mb + 16
      << "\" text-anchor=\"end\" font-size=\"11\">" << detail::fmt(hi) << "</text>\n";
  double ly = mt + 6;
  for (const auto& s : series) {
    out << "<rect x=\"" << W - mr - 150 << "\" y=\"" << ly - 9
        << "\" width=\"12\" height=\"12\" fill=\"" << s.color << "\" fill-opacity=\"0.45\"/>\n";
    out << "<text x=\"" << W - mr - 133 << "\" y=\"" << ly << "\" font-size=\"12\">" << s.label
        << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

struct SvgLine {
  std::string label;
  std::string color;
  std::vector<double> ys;
};

inline void write_line_svg(const std::vector<double>& xs, const std::vector<SvgLine>& lines,
                           const std::string& title, const std::string& path) {
  if (xs.empty() || lines.empty()) throw Error("write_line_svg: empty input");
  const double W = 640, H = 400, ml = 60, mr = 15, mt = 30, mb = 35;
  double xlo = xs.front(), xhi = xs.back();
  for (double x : xs) {
    xlo = std::min(xlo, x);
    xhi = std::max(xhi, x);
  }
  double ylo = lines[0].ys[0], yhi = lines[0].ys[0];
  for (const auto& l : lines)
    for (double y : l.ys) {
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  if (yhi <= ylo) yhi = ylo + 1e-9;
  if (xhi <= xlo) xhi = xlo + 1e-9;
  auto px = [&](double x) { return ml + (x - xlo) / (xhi - xlo) * (W - ml - mr); };
  auto py = [&](double y) { return H - mb - (y - ylo) / (yhi - ylo) * (H - mt - mb); };

  std::ofstream out(path);
  if (!out) throw Error("cannot open SVG for writing: " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" viewBox=\"0 0 " << W << " " << H << "\">\n";
  out << "<rect width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\">" << title
      << "</text>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
      << H - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
      << "\" stroke=\"black\"/>\n";
  out << "<text x=\"" << ml - 5 << "\" y=\"" << H - mb << "\" text-anchor=\"end\" font-size=\"11\">"
      << detail::fmt(ylo) << "</text>\n";
  out << "<text x=\"" << ml - 5 << "\" y=\"" << mt + 10
      << "\" text-anchor=\"end\" font-size=\"11\">" << detail::fmt(yhi) << "</text>\n";
  double ly = mt + 6;
  for (const auto& l : lines) {
    out << "<polyline fill=\"none\" stroke=\"" << l.color << "\" stroke-width=\"2\" points=\"";
    for (size_t i = 0; i < xs.size() && i < l.ys.size(); ++i)
      out << detail::fmt(px(xs[i])) << "," << detail::fmt(py(l.ys[i])) << " ";
    out << "\"/>\n";
    out << "<text x=\"" << W - mr - 133 << "\" y=\"" << ly << "\" font-size=\"12\" fill=\""
        << l.color << "\">" << l.label << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

}  // namespace elegant
