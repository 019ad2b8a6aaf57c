// Copyright 2026 the umct authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef UMCT_PLOT_HPP
#define UMCT_PLOT_HPP

#include <fstream>
#include <string>
#include <vector>

#include "umct/common.hpp"

namespace umct {

struct Series {
  std::string name;
  std::vector<double> x, y;
};

// Minimal self-contained SVG line plot: axes, ticks, legend, one polyline
// per series. Plenty for loss curves and label-ratio sweeps.
inline void write_svg_lineplot(const std::string& path, const std::string& title,
                               const std::string& xlabel, const std::string& ylabel,
                               const std::vector<Series>& series) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmin > xmax) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  const double pad_y = 0.05 * (ymax - ymin);
  ymin -= pad_y;
  ymax += pad_y;

  const int W = 660, H = 420, L = 70, R = 20, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ComputeError("cannot write plot: " + path);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
     << "' viewBox='0 0 " << W << " " << H << "'>\n"
     << "<rect width='100%' height='100%' fill='white'/>\n"
     << "<text x='" << W / 2 << "' y='22' text-anchor='middle' font-size='15' "
        "font-family='sans-serif'>" << title << "</text>\n";

  // Axes and ticks.
  os << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R << "' y2='"
     << H - B << "' stroke='black'/>\n"
     << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='" << H - B
     << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    double xv = xmin + (xmax - xmin) * i / 5.0;
    double yv = ymin + (ymax - ymin) * i / 5.0;
    os << "<line x1='" << px(xv) << "' y1='" << H - B << "' x2='" << px(xv)
       << "' y2='" << H - B + 5 << "' stroke='black'/>\n"
       << "<text x='" << px(xv) << "' y='" << H - B + 18
       << "' text-anchor='middle' font-size='11' font-family='sans-serif'>"
       << format_real(std::round(xv * 1000) / 1000) << "</text>\n"
       << "<line x1='" << L - 5 << "' y1='" << py(yv) << "' x2='" << L << "' y2='"
       << py(yv) << "' stroke='black'/>\n"
       << "<text x='" << L - 8 << "' y='" << py(yv) + 4
       << "' text-anchor='end' font-size='11' font-family='sans-serif'>"
       << format_real(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  os << "<text x='" << (L + W - R) / 2 << "' y='" << H - 12
     << "' text-anchor='middle' font-size='12' font-family='sans-serif'>" << xlabel
     << "</text>\n"
     << "<text x='16' y='" << (T + H - B) / 2
     << "' text-anchor='middle' font-size='12' font-family='sans-serif' "
        "transform='rotate(-90 16 " << (T + H - B) / 2 << ")'>" << ylabel
     << "</text>\n";

  for (std::size_t s = 0; s < series.size(); ++s) {
    const char* color = kPalette[s % 8];
    os << "<polyline fill='none' stroke='" << color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < series[s].x.size(); ++i)
      os << px(series[s].x[i]) << ',' << py(series[s].y[i]) << ' ';
    os << "'/>\n";
    const int ly = T + 16 * int(s);
    os << "<line x1='" << W - R - 130 << "' y1='" << ly << "' x2='" << W - R - 110
       << "' y2='" << ly << "' stroke='" << color << "' stroke-width='2'/>\n"
       << "<text x='" << W - R - 105 << "' y='" << ly + 4
       << "' font-size='11' font-family='sans-serif'>" << series[s].name
       << "</text>\n";
  }
  os << "</svg>\n";
}

inline void write_series_csv(const std::string& path, const std::string& xname,
                             const std::vector<Series>& series) {
  std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw ComputeError("cannot write plot csv: " + path);
  os << xname;
  for (const auto& s : series) os << ',' << s.name;
  os << '\n';
  std::size_t rows = 0;
  for (const auto& s : series) rows = std::max(rows, s.x.size());
  for (std::size_t i = 0; i < rows; ++i) {
    bool have_x = false;
    for (const auto& s : series)
      if (i < s.x.size() && !have_x) {
        os << format_real(s.x[i]);
        have_x = true;
      }
    for (const auto& s : series) {
      os << ',';
      if (i < s.y.size()) os << format_real(s.y[i]);
    }
    os << '\n';
  }
}

}  // namespace umct

#endif  // UMCT_PLOT_HPP
