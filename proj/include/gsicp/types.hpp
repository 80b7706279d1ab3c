#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace gsicp {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Quat = Eigen::Quaterniond;

/// Pinhole camera model. width/height are the image size the model refers to.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  bool valid() const { return fx > 0.0 && fy > 0.0 && width > 0 && height > 0; }

  /// Model for an image downsampled by an integer factor (block averaging).
  Intrinsics downsampled(int factor) const {
    Intrinsics out = *this;
    const double f = static_cast<double>(factor);
    out.fx = fx / f;
    out.fy = fy / f;
    // Block (0,0) covers pixels [0, factor), whose centre is (factor - 1) / 2.
    out.cx = (cx - 0.5 * (f - 1.0)) / f;
    out.cy = (cy - 0.5 * (f - 1.0)) / f;
    out.width = width / factor;
    out.height = height / factor;
    return out;
  }
};

}  // namespace gsicp
