#pragma once

#include <string>
#include <vector>

namespace qdc {

struct SvgSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Tiny line-chart writer; enough to look at training curves and ablation
// sweeps without pulling in a plotting stack.
void write_svg_chart(const std::string& path,
                     const std::vector<SvgSeries>& series,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label);

}  // namespace qdc
