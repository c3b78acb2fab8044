#pragma once
// Minimal deterministic SVG line-chart writer for sweep/training plots.
#include <string>
#include <vector>

namespace cgan {

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

// Static SVG with axes, ticks, legend, and one polyline per series. Series
// colors cycle through a fixed palette; output bytes depend only on inputs.
void write_line_chart(const std::string& path, const std::string& title,
                      const std::string& x_label, const std::string& y_label,
                      const std::vector<PlotSeries>& series);

}  // namespace cgan
