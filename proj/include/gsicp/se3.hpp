#pragma once

#include "gsicp/types.hpp"

namespace gsicp {

/// Rigid transform x -> R x + t.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}
  Pose(const Quat& rotation, const Vec3& translation)
      : rotation_(rotation.normalized().toRotationMatrix()), translation_(translation) {}

  static Pose identity() { return {}; }
  static Pose fromMatrix(const Mat4& m) {
    return {Mat3(m.topLeftCorner<3, 3>()), Vec3(m.topRightCorner<3, 1>())};
  }

  /// Exponential map of a twist (rho, phi): translation part first.
  static Pose exp(const Vec6& twist);

  /// Inverse of exp; returns (rho, phi).
  Vec6 log() const;

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Quat quaternion() const { return Quat(rotation_).normalized(); }
  Mat4 matrix() const;

  Pose inverse() const {
    const Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }
  Pose operator*(const Pose& o) const {
    return {Mat3(rotation_ * o.rotation_), Vec3(rotation_ * o.translation_ + translation_)};
  }
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  /// Left-multiplied update exp(twist) * this.
  Pose leftUpdate(const Vec6& twist) const { return exp(twist) * (*this); }

  /// Re-orthonormalise the rotation (SVD projection onto SO(3)).
  void normalize();

  /// Orthonormality and det = +1 within tol.
  bool isValid(double tol = 1e-9) const;

  double rotationAngle() const;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Skew-symmetric cross-product matrix.
inline Mat3 hat(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

/// Rotation angle (rad) and translation distance between two poses.
struct PoseDelta {
  double angle = 0.0;
  double distance = 0.0;
};
PoseDelta poseDelta(const Pose& a, const Pose& b);

}  // namespace gsicp
