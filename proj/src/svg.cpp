#include "qdc/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qdc/errors.hpp"

namespace qdc {

namespace {

constexpr int kWidth = 720;
constexpr int kHeight = 440;
constexpr int kMarginL = 70, kMarginR = 20, kMarginT = 40, kMarginB = 50;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#9467bd", "#ff7f0e", "#8c564b"};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

void write_svg_chart(const std::string& path,
                     const std::vector<SvgSeries>& series,
                     const std::string& title, const std::string& x_label,
                     const std::string& y_label) {
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
  bool first = true;
  for (const auto& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (first) {
        xmin = xmax = s.x[i];
        ymin = ymax = s.y[i];
        first = false;
      }
      xmin = std::min(xmin, s.x[i]);
      xmax = std::max(xmax, s.x[i]);
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;

  const double pw = kWidth - kMarginL - kMarginR;
  const double ph = kHeight - kMarginT - kMarginB;
  auto px = [&](double x) { return kMarginL + (x - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double y) {
    return kHeight - kMarginB - (y - ymin) / (ymax - ymin) * ph;
  };

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write svg: " + path);
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth
        << "\" height=\"" << kHeight << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    out << "<text x=\"" << kWidth / 2 << "\" y=\"24\" text-anchor=\"middle\" "
           "font-family=\"sans-serif\" font-size=\"16\">"
        << title << "</text>\n";

    // axes
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << kMarginT << "\" x2=\""
        << kMarginL << "\" y2=\"" << kHeight - kMarginB
        << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kMarginL << "\" y1=\"" << kHeight - kMarginB
        << "\" x2=\"" << kWidth - kMarginR << "\" y2=\""
        << kHeight - kMarginB << "\" stroke=\"black\"/>\n";

    // min/max tick labels
    out << "<text x=\"" << kMarginL << "\" y=\"" << kHeight - kMarginB + 18
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << num(xmin)
        << "</text>\n";
    out << "<text x=\"" << kWidth - kMarginR << "\" y=\""
        << kHeight - kMarginB + 18
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << num(xmax) << "</text>\n";
    out << "<text x=\"" << kMarginL - 6 << "\" y=\"" << kHeight - kMarginB
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << num(ymin) << "</text>\n";
    out << "<text x=\"" << kMarginL - 6 << "\" y=\"" << kMarginT + 10
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">"
        << num(ymax) << "</text>\n";
    out << "<text x=\"" << kMarginL + pw / 2 << "\" y=\"" << kHeight - 12
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"12\">"
        << x_label << "</text>\n";
    out << "<text x=\"16\" y=\"" << kMarginT + ph / 2
        << "\" font-family=\"sans-serif\" font-size=\"12\" "
           "transform=\"rotate(-90 16 "
        << kMarginT + ph / 2 << ")\" text-anchor=\"middle\">" << y_label
        << "</text>\n";

    for (size_t si = 0; si < series.size(); ++si) {
      const auto& s = series[si];
      const char* color = kPalette[si % (sizeof(kPalette) / sizeof(*kPalette))];
      out << "<polyline fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\" points=\"";
      for (size_t i = 0; i < s.x.size(); ++i) {
        if (i) out << ' ';
        out << num(px(s.x[i])) << ',' << num(py(s.y[i]));
      }
      out << "\"/>\n";
      // legend entry
      const double ly = kMarginT + 14.0 * (static_cast<double>(si) + 1);
      out << "<line x1=\"" << kWidth - kMarginR - 120 << "\" y1=\"" << ly
          << "\" x2=\"" << kWidth - kMarginR - 100 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
      out << "<text x=\"" << kWidth - kMarginR - 94 << "\" y=\"" << ly + 4
          << "\" font-family=\"sans-serif\" font-size=\"11\">" << s.label
          << "</text>\n";
    }
    out << "</svg>\n";
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace qdc
