#pragma once

// Standalone SVG line and grouped-bar charts for experiment summaries.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace cqpc::svg {

struct Series {
  std::string name;
  std::vector<double> values;  // one per category; NaN leaves a gap
};

/// Lines over categorical x positions (e.g. pooling sizes or data fractions).
struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<Series> series;
};

/// Bars grouped by category, one bar per series.
struct BarChart {
  std::string title;
  std::string y_label;
  std::vector<std::string> categories;
  std::vector<Series> series;
};

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                           "#9467bd", "#8c564b", "#e377c2", "#17becf"};
inline constexpr double kWidth = 640.0;
inline constexpr double kHeight = 400.0;
inline constexpr double kLeft = 70.0;
inline constexpr double kRight = 150.0;
inline constexpr double kTop = 40.0;
inline constexpr double kBottom = 60.0;

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Frame {
  double lo;
  double hi;
  double y(double v) const {
    const double plot_h = kHeight - kTop - kBottom;
    return kTop + plot_h * (1.0 - (v - lo) / (hi - lo));
  }
};

inline Frame frame_for(const std::vector<Series>& series, bool include_zero) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (!std::isfinite(v)) continue;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  if (!std::isfinite(lo)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (include_zero) lo = std::min(lo, 0.0);
  if (hi - lo < 1e-12) {
    hi += 0.5;
    lo -= 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {include_zero && lo == 0.0 ? 0.0 : lo - pad, hi + pad};
}

inline void open_svg(std::ostringstream& os, const std::string& title, const std::string& y_label,
                     const Frame& f) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
     << escape(title) << "</text>\n";
  const double x0 = kLeft;
  const double x1 = kWidth - kRight;
  os << "<line x1=\"" << x0 << "\" y1=\"" << kTop << "\" x2=\"" << x0 << "\" y2=\""
     << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << x0 << "\" y1=\"" << kHeight - kBottom << "\" x2=\"" << x1 << "\" y2=\""
     << kHeight - kBottom << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = f.lo + (f.hi - f.lo) * t / 4.0;
    os << "<text x=\"" << x0 - 6 << "\" y=\"" << f.y(v) + 4 << "\" text-anchor=\"end\">" << num(v)
       << "</text>\n";
    os << "<line x1=\"" << x0 << "\" y1=\"" << f.y(v) << "\" x2=\"" << x1 << "\" y2=\"" << f.y(v)
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text transform=\"translate(16," << (kTop + kHeight - kBottom) / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << escape(y_label) << "</text>\n";
}

inline void legend(std::ostringstream& os, const std::vector<Series>& series) {
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double y = kTop + 18.0 * static_cast<double>(i);
    const double x = kWidth - kRight + 12.0;
    os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"12\" height=\"12\" fill=\""
       << kPalette[i % 8] << "\"/>\n";
    os << "<text x=\"" << x + 18 << "\" y=\"" << y + 10 << "\">" << escape(series[i].name)
       << "</text>\n";
  }
}

}  // namespace detail

inline std::string render(const LineChart& chart) {
  using namespace detail;
  std::ostringstream os;
  const Frame f = frame_for(chart.series, false);
  open_svg(os, chart.title, chart.y_label, f);
  const std::size_t k = chart.categories.size();
  const double plot_w = kWidth - kLeft - kRight;
  auto x_at = [&](std::size_t i) {
    return k <= 1 ? kLeft + plot_w / 2 : kLeft + 20.0 + (plot_w - 40.0) * i / double(k - 1);
  };
  for (std::size_t i = 0; i < k; ++i) {
    os << "<text x=\"" << x_at(i) << "\" y=\"" << kHeight - kBottom + 18
       << "\" text-anchor=\"middle\">" << escape(chart.categories[i]) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kHeight - 16
     << "\" text-anchor=\"middle\">" << escape(chart.x_label) << "</text>\n";
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const auto& vals = chart.series[s].values;
    std::string path;
    bool pen = false;
    for (std::size_t i = 0; i < std::min(k, vals.size()); ++i) {
      if (!std::isfinite(vals[i])) {
        pen = false;
        continue;
      }
      path += (pen ? " L " : " M ") + num(x_at(i)) + " " + num(f.y(vals[i]));
      pen = true;
      os << "<circle cx=\"" << x_at(i) << "\" cy=\"" << f.y(vals[i]) << "\" r=\"3\" fill=\""
         << kPalette[s % 8] << "\"/>\n";
    }
    if (!path.empty()) {
      os << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << kPalette[s % 8]
         << "\" stroke-width=\"2\"/>\n";
    }
  }
  legend(os, chart.series);
  os << "</svg>\n";
  return os.str();
}

inline std::string render(const BarChart& chart) {
  using namespace detail;
  std::ostringstream os;
  const Frame f = frame_for(chart.series, true);
  open_svg(os, chart.title, chart.y_label, f);
  const std::size_t k = std::max<std::size_t>(1, chart.categories.size());
  const double plot_w = kWidth - kLeft - kRight;
  const double group_w = plot_w / static_cast<double>(k);
  const double bar_w = 0.8 * group_w / static_cast<double>(std::max<std::size_t>(1, chart.series.size()));
  for (std::size_t c = 0; c < chart.categories.size(); ++c) {
    const double gx = kLeft + group_w * static_cast<double>(c) + 0.1 * group_w;
    for (std::size_t s = 0; s < chart.series.size(); ++s) {
      if (c >= chart.series[s].values.size()) continue;
      const double v = chart.series[s].values[c];
      if (!std::isfinite(v)) continue;
      const double y = f.y(v);
      os << "<rect x=\"" << gx + bar_w * static_cast<double>(s) << "\" y=\"" << y << "\" width=\""
         << bar_w << "\" height=\"" << f.y(f.lo) - y << "\" fill=\"" << kPalette[s % 8]
         << "\"/>\n";
    }
    os << "<text x=\"" << kLeft + group_w * (static_cast<double>(c) + 0.5) << "\" y=\""
       << kHeight - kBottom + 18 << "\" text-anchor=\"middle\">" << escape(chart.categories[c])
       << "</text>\n";
  }
  legend(os, chart.series);
  os << "</svg>\n";
  return os.str();
}

}  // namespace cqpc::svg
