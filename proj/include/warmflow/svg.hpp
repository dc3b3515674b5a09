// Copyright 2026 The WarmFlow Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// SVG plots rendered from CSV files on disk. Nothing here computes results:
// every mark is a row of the input table.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "warmflow/numkit/tensor.hpp"

namespace warmflow {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw ConfigError("csv: no column '" + name + "'");
  }
  double number(std::size_t row, int col) const { return std::stod(rows[row][static_cast<std::size_t>(col)]); }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path.string() + ": empty file");
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) throw ConfigError(path.string() + ": ragged row");
    t.rows.push_back(std::move(cells));
  }
  return t;
}

namespace svg {

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline std::string escape(const std::string& s) {
  std::string o;
  for (char c : s) {
    switch (c) {
      case '&': o += "&amp;"; break;
      case '<': o += "&lt;"; break;
      case '>': o += "&gt;"; break;
      case '"': o += "&quot;"; break;
      default: o += c;
    }
  }
  return o;
}

inline const char* color(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % 10];
}

struct Frame {
  double x0, x1, y0, y1;
  double left = 70, right = 20, top = 40, bottom = 50;
  double width = 640, height = 420;

  double px(double x) const { return left + (x - x0) / (x1 - x0) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y0) / (y1 - y0) * (height - top - bottom); }
};

inline void pad_range(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) lo = 0.0, hi = 1.0;
  if (hi - lo < 1e-12) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double m = 0.05 * (hi - lo);
  lo -= m;
  hi += m;
}

inline void open(std::ostream& os, const Frame& f, const std::string& title, const std::string& xlabel,
                 const std::string& ylabel) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(f.width) << "\" height=\"" << num(f.height)
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << num(f.width / 2) << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << escape(title)
     << "</text>\n";
  const double ax0 = f.left, ax1 = f.width - f.right, ay0 = f.top, ay1 = f.height - f.bottom;
  os << "<rect x=\"" << num(ax0) << "\" y=\"" << num(ay0) << "\" width=\"" << num(ax1 - ax0) << "\" height=\""
     << num(ay1 - ay0) << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = f.x0 + (f.x1 - f.x0) * i / 4.0;
    const double yv = f.y0 + (f.y1 - f.y0) * i / 4.0;
    os << "<text x=\"" << num(f.px(xv)) << "\" y=\"" << num(ay1 + 16) << "\" text-anchor=\"middle\">" << label(xv)
       << "</text>\n";
    os << "<text x=\"" << num(ax0 - 6) << "\" y=\"" << num(f.py(yv) + 4) << "\" text-anchor=\"end\">" << label(yv)
       << "</text>\n";
  }
  os << "<text x=\"" << num(f.width / 2) << "\" y=\"" << num(f.height - 12) << "\" text-anchor=\"middle\">"
     << escape(xlabel) << "</text>\n";
  os << "<text x=\"16\" y=\"" << num(f.height / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << num(f.height / 2) << ")\">" << escape(ylabel) << "</text>\n";
}

// Copies the run stamp columns of the first row into a comment.
inline void stamp(std::ostream& os, const CsvTable& t) {
  std::string hash, seed;
  for (std::size_t i = 0; i < t.header.size() && !t.rows.empty(); ++i) {
    if (t.header[i] == "config_hash") hash = t.rows[0][i];
    if (t.header[i] == "seed") seed = t.rows[0][i];
  }
  os << "<!-- config_hash=" << escape(hash) << " seed=" << escape(seed) << " -->\n";
}

}  // namespace svg

struct LinePlot {
  std::string title;
  std::string x;
  std::string y;
  std::vector<std::string> group_by;  // one polyline per distinct key
  bool markers = false;
};

// One polyline per group, in file row order.
inline void write_line_svg(const CsvTable& t, const LinePlot& spec, const std::filesystem::path& out) {
  const int xc = t.column(spec.x);
  const int yc = t.column(spec.y);
  std::vector<int> gc;
  for (const auto& g : spec.group_by) gc.push_back(t.column(g));
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> groups;
  double xlo = INFINITY, xhi = -INFINITY, ylo = INFINITY, yhi = -INFINITY;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::string key;
    for (std::size_t i = 0; i < gc.size(); ++i)
      key += (i ? " " : "") + spec.group_by[i] + "=" + t.rows[r][static_cast<std::size_t>(gc[i])];
    if (!groups.count(key)) order.push_back(key);
    const double xv = t.number(r, xc), yv = t.number(r, yc);
    if (!std::isfinite(xv) || !std::isfinite(yv)) continue;
    groups[key].push_back({xv, yv});
    xlo = std::min(xlo, xv), xhi = std::max(xhi, xv), ylo = std::min(ylo, yv), yhi = std::max(yhi, yv);
  }
  svg::pad_range(xlo, xhi);
  svg::pad_range(ylo, yhi);
  svg::Frame f{xlo, xhi, ylo, yhi};
  std::ofstream os(out);
  svg::open(os, f, spec.title, spec.x, spec.y);
  svg::stamp(os, t);
  for (std::size_t g = 0; g < order.size(); ++g) {
    const auto& pts = groups[order[g]];
    os << "<polyline fill=\"none\" stroke=\"" << svg::color(g) << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << (i ? " " : "") << svg::num(f.px(pts[i].first)) << "," << svg::num(f.py(pts[i].second));
    os << "\"/>\n";
    if (spec.markers)
      for (const auto& p : pts)
        os << "<circle cx=\"" << svg::num(f.px(p.first)) << "\" cy=\"" << svg::num(f.py(p.second))
           << "\" r=\"2.5\" fill=\"" << svg::color(g) << "\"/>\n";
    if (order.size() <= 12 && !order[g].empty())
      os << "<text x=\"" << svg::num(f.width - f.right - 6) << "\" y=\"" << svg::num(f.top + 14 + 14 * g)
         << "\" text-anchor=\"end\" fill=\"" << svg::color(g) << "\">" << svg::escape(order[g]) << "</text>\n";
  }
  os << "</svg>\n";
}

// Violins from (group, y, density) rows: width at y is proportional to the
// density, one violin per group.
inline void write_violin_svg(const CsvTable& t, const std::string& group, const std::string& title,
                             const std::filesystem::path& out) {
  const int gc = t.column(group);
  const int yc = t.column("y");
  const int dc = t.column("density");
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> groups;
  double dmax = 0.0;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string& key = t.rows[r][static_cast<std::size_t>(gc)];
    if (!groups.count(key)) order.push_back(key);
    const double d = t.number(r, dc);
    groups[key].push_back({t.number(r, yc), d});
    if (std::isfinite(d)) dmax = std::max(dmax, d);
  }
  const double n = static_cast<double>(std::max<std::size_t>(order.size(), 1));
  svg::Frame f{0.0, n, 0.0, 1.0};
  std::ofstream os(out);
  svg::open(os, f, title, group, "success rate");
  svg::stamp(os, t);
  for (std::size_t g = 0; g < order.size(); ++g) {
    const auto& pts = groups[order[g]];
    const double cx = g + 0.5;
    const double half = dmax > 0.0 ? 0.45 / dmax : 0.0;
    os << "<polygon fill=\"" << svg::color(g) << "\" fill-opacity=\"0.5\" stroke=\"" << svg::color(g) << "\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      os << (i ? " " : "") << svg::num(f.px(cx + half * pts[i].second)) << "," << svg::num(f.py(pts[i].first));
    for (std::size_t i = pts.size(); i-- > 0;)
      os << " " << svg::num(f.px(cx - half * pts[i].second)) << "," << svg::num(f.py(pts[i].first));
    os << "\"/>\n";
    os << "<text x=\"" << svg::num(f.px(cx)) << "\" y=\"" << svg::num(f.top + 14) << "\" text-anchor=\"middle\">"
       << svg::escape(order[g]) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace warmflow
