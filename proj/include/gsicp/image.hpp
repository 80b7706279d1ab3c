#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

#include "gsicp/types.hpp"

namespace gsicp {

/// Dense interleaved image of doubles, row-major.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t pixelCount() const { return static_cast<std::size_t>(width) * height; }
  bool sameShape(const Image& o) const {
    return width == o.width && height == o.height && channels == o.channels;
  }

  double& at(int x, int y, int c = 0) {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int x, int y, int c = 0) const {
    assert(x >= 0 && x < width && y >= 0 && y < height && c >= 0 && c < channels);
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Block-average downsampling. For depth images pass `skip_zero = true` so
/// invalid (zero) samples do not drag the average towards the camera.
Image downsampleImage(const Image& in, int factor, bool skip_zero = false);

/// One RGBD observation. color is 3-channel in [0,1], depth is metres (0 = invalid).
struct Frame {
  Image color;
  Image depth;
  Intrinsics intrinsics;
  double timestamp = 0.0;
  int index = 0;
};

}  // namespace gsicp
