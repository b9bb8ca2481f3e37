#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace footprint::cli {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct LineChart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
  int width = 900;
  int height = 560;
};

// Renders with OpenCV drawing primitives and writes a PNG. Series with a
// single point are drawn as markers.
void write_line_chart(const LineChart& chart, const std::filesystem::path& path);

}  // namespace footprint::cli
