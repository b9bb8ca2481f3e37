#include "footprint/image_io.hpp"

#include <algorithm>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "footprint/dataset.hpp"
#include "footprint/errors.hpp"

namespace fs = std::filesystem;

namespace footprint {

namespace {

cv::Mat read_any(const fs::path& path) {
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorKind::kIo, "cannot read " + path.string() + ": no such file");
  }
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED | cv::IMREAD_ANYDEPTH);
  if (m.empty()) {
    throw Error(ErrorKind::kIo, "cannot decode raster " + path.string());
  }
  if (m.depth() != CV_8U && m.depth() != CV_16U) {
    m.convertTo(m, CV_32S);
  }
  return m;
}

ImageRaster to_raster(const cv::Mat& bgr_or_gray) {
  cv::Mat rgb;
  switch (bgr_or_gray.channels()) {
    case 1: cv::cvtColor(bgr_or_gray, rgb, cv::COLOR_GRAY2RGB); break;
    case 3: cv::cvtColor(bgr_or_gray, rgb, cv::COLOR_BGR2RGB); break;
    case 4: cv::cvtColor(bgr_or_gray, rgb, cv::COLOR_BGRA2RGB); break;
    default:
      throw Error(ErrorKind::kDimension,
                  "unsupported channel count " + std::to_string(bgr_or_gray.channels()));
  }
  rgb.convertTo(rgb, CV_32SC3);
  ImageRaster out(rgb.rows, rgb.cols, 3);
  for (int r = 0; r < rgb.rows; ++r) {
    const auto* row = rgb.ptr<std::int32_t>(r);
    std::copy(row, row + rgb.cols * 3, out.data.begin() + out.index(r, 0));
  }
  return out;
}

void write_png(const fs::path& path, const cv::Mat& m) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) {
    throw Error(ErrorKind::kIo, "cannot write " + path.string());
  }
}

}  // namespace

ImageRaster read_image(const fs::path& path) { return to_raster(read_any(path)); }

MaskRaster read_mask(const fs::path& path) {
  cv::Mat m = read_any(path);
  cv::Mat first;
  cv::extractChannel(m, first, 0);
  first.convertTo(first, CV_32S);
  ImageRaster raw(first.rows, first.cols, 1);
  for (int r = 0; r < first.rows; ++r) {
    const auto* row = first.ptr<std::int32_t>(r);
    std::copy(row, row + first.cols, raw.data.begin() + raw.index(r, 0));
  }
  return binarize_mask(raw);
}

void write_mask_png(const fs::path& path, const MaskRaster& mask) {
  cv::Mat m(mask.height, mask.width, CV_8UC1);
  for (int r = 0; r < mask.height; ++r) {
    auto* row = m.ptr<std::uint8_t>(r);
    for (int c = 0; c < mask.width; ++c) row[c] = mask.at(r, c) ? 255 : 0;
  }
  write_png(path, m);
}

void write_image_png(const fs::path& path, const ImageRaster& image) {
  if (image.channels != 3 && image.channels != 1) {
    throw Error(ErrorKind::kDimension, "PNG export expects 1 or 3 channels");
  }
  cv::Mat m(image.height, image.width, CV_8UC(image.channels));
  for (int r = 0; r < image.height; ++r) {
    auto* row = m.ptr<std::uint8_t>(r);
    for (int c = 0; c < image.width * image.channels; ++c) {
      row[c] = static_cast<std::uint8_t>(std::clamp(image.data[image.index(r, 0) + c], 0, 255));
    }
  }
  if (image.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  write_png(path, m);
}

ImageRaster mask_to_rgb(const MaskRaster& mask) {
  ImageRaster out(mask.height, mask.width, 3);
  for (int r = 0; r < mask.height; ++r) {
    for (int c = 0; c < mask.width; ++c) {
      const std::int32_t v = mask.at(r, c) ? 255 : 0;
      for (int ch = 0; ch < 3; ++ch) out.at(r, c, ch) = v;
    }
  }
  return out;
}

ImageRaster side_by_side(const ImageRaster& left, const ImageRaster& right) {
  if (left.height != right.height || left.channels != right.channels) {
    throw Error(ErrorKind::kDimension, "side_by_side requires equal height and channels");
  }
  ImageRaster out(left.height, left.width + right.width, left.channels);
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < left.width; ++c)
      for (int ch = 0; ch < left.channels; ++ch) out.at(r, c, ch) = left.at(r, c, ch);
    for (int c = 0; c < right.width; ++c)
      for (int ch = 0; ch < right.channels; ++ch)
        out.at(r, left.width + c, ch) = right.at(r, c, ch);
  }
  return out;
}

}  // namespace footprint
