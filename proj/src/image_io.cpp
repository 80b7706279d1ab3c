#include "gsicp/image_io.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "gsicp/errors.hpp"

namespace gsicp {

Image loadColorImage(const std::filesystem::path& path) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (m.empty()) throw FormatError("cannot decode colour image " + path.string());
  Image img(m.cols, m.rows, 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < m.cols; ++x) {
      // OpenCV decodes to BGR.
      img.at(x, y, 0) = row[x][2] / 255.0;
      img.at(x, y, 1) = row[x][1] / 255.0;
      img.at(x, y, 2) = row[x][0] / 255.0;
    }
  }
  return img;
}

Image loadDepthImage(const std::filesystem::path& path, double depth_scale) {
  const cv::Mat m = cv::imread(path.string(), cv::IMREAD_ANYDEPTH);
  if (m.empty()) throw FormatError("cannot decode depth image " + path.string());
  if (m.channels() != 1) throw FormatError("depth image must be single channel: " + path.string());
  cv::Mat raw;
  m.convertTo(raw, CV_64F);
  Image img(m.cols, m.rows, 1);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = raw.ptr<double>(y);
    for (int x = 0; x < m.cols; ++x) img.at(x, y) = row[x] / depth_scale;
  }
  return img;
}

void writeColorImage(const std::filesystem::path& path, const Image& rgb) {
  if (rgb.channels != 3) throw InputError("writeColorImage: expected 3 channels");
  cv::Mat m(rgb.height, rgb.width, CV_8UC3);
  for (int y = 0; y < rgb.height; ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < rgb.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(x, y, c), 0.0, 1.0);
        row[x][2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  if (!cv::imwrite(path.string(), m)) throw FormatError("cannot write " + path.string());
}

void writeDepthImage(const std::filesystem::path& path, const Image& depth, double depth_scale) {
  if (depth.channels != 1) throw InputError("writeDepthImage: expected 1 channel");
  cv::Mat m(depth.height, depth.width, CV_16UC1);
  for (int y = 0; y < depth.height; ++y) {
    auto* row = m.ptr<std::uint16_t>(y);
    for (int x = 0; x < depth.width; ++x) {
      const double raw = std::round(depth.at(x, y) * depth_scale);
      row[x] = static_cast<std::uint16_t>(std::clamp(raw, 0.0, 65535.0));
    }
  }
  if (!cv::imwrite(path.string(), m)) throw FormatError("cannot write " + path.string());
}

}  // namespace gsicp
