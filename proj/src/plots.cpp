#include "udaseg/plots.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "udaseg/common.hpp"

namespace udaseg {

namespace {
constexpr int kW = 760, kH = 420, kMargin = 52;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                         "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

double nice_min(double v) { return std::isfinite(v) ? v : 0.0; }
}  // namespace

void write_svg_lines(const std::vector<PlotSeries>& series, const std::string& title,
                     const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write plot '" + path + "'");
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& s : series)
    for (size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;
  ymin = nice_min(ymin);
  auto px = [&](double x) { return kMargin + (x - xmin) / (xmax - xmin) * (kW - 2 * kMargin); };
  auto py = [&](double y) {
    return kH - kMargin - (y - ymin) / (ymax - ymin) * (kH - 2 * kMargin);
  };
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
  out << "<line x1='" << kMargin << "' y1='" << kH - kMargin << "' x2='" << kW - kMargin
      << "' y2='" << kH - kMargin << "' stroke='black'/>\n";
  out << "<line x1='" << kMargin << "' y1='" << kMargin << "' x2='" << kMargin << "' y2='"
      << kH - kMargin << "' stroke='black'/>\n";
  char buf[64];
  for (int t = 0; t <= 4; ++t) {
    double yv = ymin + (ymax - ymin) * t / 4.0;
    std::snprintf(buf, sizeof(buf), "%.3g", yv);
    out << "<text x='" << kMargin - 6 << "' y='" << py(yv) + 4
        << "' text-anchor='end' font-size='10'>" << buf << "</text>\n";
    double xv = xmin + (xmax - xmin) * t / 4.0;
    std::snprintf(buf, sizeof(buf), "%.3g", xv);
    out << "<text x='" << px(xv) << "' y='" << kH - kMargin + 16
        << "' text-anchor='middle' font-size='10'>" << buf << "</text>\n";
  }
  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    out << "<polyline fill='none' stroke='" << kColors[si % 8] << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < s.x.size(); ++i) out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    out << "'/>\n";
    out << "<text x='" << kW - kMargin + 4 << "' y='" << kMargin + 14 * si + 10
        << "' font-size='11' fill='" << kColors[si % 8] << "'>" << s.name << "</text>\n";
  }
  out << "</svg>\n";
}

void write_svg_bars(const std::vector<std::string>& labels, const std::vector<double>& a,
                    const std::string& name_a, const std::vector<double>& b,
                    const std::string& name_b, const std::string& title, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write plot '" + path + "'");
  const size_t n = labels.size();
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << kW << "' height='" << kH << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << kW / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
  double plot_w = kW - 2 * kMargin, plot_h = kH - 2 * kMargin;
  double group_w = plot_w / std::max<size_t>(1, n);
  double bar_w = group_w * 0.35;
  auto py = [&](double v) { return kH - kMargin - v * plot_h; };
  for (int t = 0; t <= 4; ++t) {
    double v = t / 4.0;
    out << "<line x1='" << kMargin << "' y1='" << py(v) << "' x2='" << kW - kMargin << "' y2='"
        << py(v) << "' stroke='#dddddd'/>\n";
    out << "<text x='" << kMargin - 6 << "' y='" << py(v) + 4
        << "' text-anchor='end' font-size='10'>" << v << "</text>\n";
  }
  for (size_t i = 0; i < n; ++i) {
    double x0 = kMargin + i * group_w + group_w * 0.12;
    double va = std::clamp(i < a.size() ? a[i] : 0.0, 0.0, 1.0);
    double vb = std::clamp(i < b.size() ? b[i] : 0.0, 0.0, 1.0);
    out << "<rect x='" << x0 << "' y='" << py(va) << "' width='" << bar_w << "' height='"
        << (kH - kMargin - py(va)) << "' fill='" << kColors[0] << "'/>\n";
    out << "<rect x='" << x0 + bar_w + 2 << "' y='" << py(vb) << "' width='" << bar_w
        << "' height='" << (kH - kMargin - py(vb)) << "' fill='" << kColors[1] << "'/>\n";
    out << "<text x='" << x0 + bar_w << "' y='" << kH - kMargin + 14
        << "' text-anchor='middle' font-size='9'>" << labels[i] << "</text>\n";
  }
  out << "<text x='" << kMargin << "' y='" << kMargin - 10 << "' font-size='11' fill='"
      << kColors[0] << "'>" << name_a << "</text>\n";
  out << "<text x='" << kMargin + 120 << "' y='" << kMargin - 10 << "' font-size='11' fill='"
      << kColors[1] << "'>" << name_b << "</text>\n";
  out << "</svg>\n";
}

}  // namespace udaseg
