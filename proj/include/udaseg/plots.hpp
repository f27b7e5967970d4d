#pragma once

#include <string>
#include <vector>

namespace udaseg {

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

// Static SVG line chart (loss curves).
void write_svg_lines(const std::vector<PlotSeries>& series, const std::string& title,
                     const std::string& path);

// Grouped bar chart (per-case Dice, stage-2 vs self-trained).
void write_svg_bars(const std::vector<std::string>& labels, const std::vector<double>& a,
                    const std::string& name_a, const std::vector<double>& b,
                    const std::string& name_b, const std::string& title, const std::string& path);

}  // namespace udaseg
