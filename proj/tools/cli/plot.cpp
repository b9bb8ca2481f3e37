#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "footprint/errors.hpp"

namespace footprint::cli {
namespace {

const cv::Scalar kPalette[] = {{180, 119, 31}, {14, 127, 255}, {44, 160, 44}, {40, 39, 214}};
const cv::Scalar kInk{40, 40, 40};
const cv::Scalar kGrid{225, 225, 225};

std::string tick_label(double v) {
  char buf[32];
  const double a = std::abs(v);
  if (a != 0.0 && (a < 1e-3 || a >= 1e5)) {
    std::snprintf(buf, sizeof buf, "%.1e", v);
  } else {
    std::snprintf(buf, sizeof buf, "%.3g", v);
  }
  return buf;
}

// Pads degenerate ranges so a single point or a flat line sits mid-plot.
void widen(double& lo, double& hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi)) {
    lo = 0.0;
    hi = 1.0;
  }
  if (hi - lo < 1e-12) {
    const double pad = std::max(std::abs(lo) * 0.05, 0.5);
    lo -= pad;
    hi += pad;
  }
}

}  // namespace

void write_line_chart(const LineChart& chart, const std::filesystem::path& path) {
  const int left = 80, right = 30, top = 50, bottom = 60;
  cv::Mat img(chart.height, chart.width, CV_8UC3, cv::Scalar(255, 255, 255));
  const int pw = chart.width - left - right;
  const int ph = chart.height - top - bottom;

  double x_lo = std::numeric_limits<double>::infinity(), x_hi = -x_lo;
  double y_lo = x_lo, y_hi = -x_lo;
  for (const auto& s : chart.series) {
    for (double v : s.x) x_lo = std::min(x_lo, v), x_hi = std::max(x_hi, v);
    for (double v : s.y) {
      if (!std::isfinite(v)) continue;
      y_lo = std::min(y_lo, v);
      y_hi = std::max(y_hi, v);
    }
  }
  widen(x_lo, x_hi);
  widen(y_lo, y_hi);
  const double y_pad = (y_hi - y_lo) * 0.05;
  y_lo -= y_pad;
  y_hi += y_pad;

  auto to_px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>(std::lround((x - x_lo) / (x_hi - x_lo) * pw)),
                     top + ph - static_cast<int>(std::lround((y - y_lo) / (y_hi - y_lo) * ph)));
  };

  const int ticks = 5;
  for (int i = 0; i <= ticks; ++i) {
    const double fy = y_lo + (y_hi - y_lo) * i / ticks;
    const double fx = x_lo + (x_hi - x_lo) * i / ticks;
    const cv::Point py = to_px(x_lo, fy);
    const cv::Point px = to_px(fx, y_lo);
    cv::line(img, {left, py.y}, {left + pw, py.y}, kGrid, 1);
    cv::line(img, {px.x, top}, {px.x, top + ph}, kGrid, 1);
    cv::putText(img, tick_label(fy), {30, py.y + 5}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1,
                cv::LINE_AA);
    const std::string xl = tick_label(fx);
    cv::putText(img, xl, {px.x - 4 * static_cast<int>(xl.size()), top + ph + 20},
                cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1, cv::LINE_AA);
  }
  cv::rectangle(img, {left, top}, {left + pw, top + ph}, kInk, 1);

  for (std::size_t si = 0; si < chart.series.size(); ++si) {
    const auto& s = chart.series[si];
    const cv::Scalar color = kPalette[si % std::size(kPalette)];
    std::vector<cv::Point> pts;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i)
      if (std::isfinite(s.y[i])) pts.push_back(to_px(s.x[i], s.y[i]));
    if (pts.size() > 1) cv::polylines(img, pts, false, color, 2, cv::LINE_AA);
    if (pts.size() <= 30)
      for (const auto& p : pts) cv::circle(img, p, 3, color, cv::FILLED, cv::LINE_AA);

    const int ly = top + 18 + static_cast<int>(si) * 20;
    cv::line(img, {left + pw - 130, ly - 4}, {left + pw - 105, ly - 4}, color, 2, cv::LINE_AA);
    cv::putText(img, s.label, {left + pw - 98, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.45, kInk, 1,
                cv::LINE_AA);
  }

  cv::putText(img, chart.title, {left, 32}, cv::FONT_HERSHEY_SIMPLEX, 0.7, kInk, 1, cv::LINE_AA);
  cv::putText(img, chart.x_label, {left + pw / 2 - 20, chart.height - 15},
              cv::FONT_HERSHEY_SIMPLEX, 0.55, kInk, 1, cv::LINE_AA);
  // Vertical y label: draw horizontally on a strip, then rotate.
  int baseline = 0;
  const cv::Size ts = cv::getTextSize(chart.y_label, cv::FONT_HERSHEY_SIMPLEX, 0.55, 1, &baseline);
  cv::Mat strip(ts.height + baseline + 4, ts.width + 4, CV_8UC3, cv::Scalar(255, 255, 255));
  cv::putText(strip, chart.y_label, {2, ts.height + 2}, cv::FONT_HERSHEY_SIMPLEX, 0.55, kInk, 1,
              cv::LINE_AA);
  cv::Mat rotated;
  cv::rotate(strip, rotated, cv::ROTATE_90_COUNTERCLOCKWISE);
  const int ry = std::max(0, top + ph / 2 - rotated.rows / 2);
  if (rotated.cols <= left && ry + rotated.rows <= img.rows)
    rotated.copyTo(img(cv::Rect(4, ry, rotated.cols, rotated.rows)));

  if (!cv::imwrite(path.string(), img))
    throw Error(ErrorKind::kIo, "cannot write " + path.string());
}

}  // namespace footprint::cli
