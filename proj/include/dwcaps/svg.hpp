#ifndef DWCAPS_SVG_HPP_
#define DWCAPS_SVG_HPP_

#include <string>
#include <vector>

namespace dwcaps {

struct ChartSeries {
  std::string name;
  std::vector<double> y;
};

// Minimal SVG line chart: axes, ticks, one polyline per series, legend.
void write_line_chart(const std::string& path, const std::vector<double>& x,
                      const std::vector<ChartSeries>& series,
                      const std::string& title, const std::string& x_label,
                      const std::string& y_label);

}  // namespace dwcaps

#endif  // DWCAPS_SVG_HPP_
