#include "gsicp/se3.hpp"

#include <cmath>

#include <Eigen/SVD>

namespace gsicp {

namespace {

// Left Jacobian of SO(3); maps rho to the translation of exp(rho, phi).
Mat3 leftJacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 k = hat(phi);
  if (theta < 1e-8) return Mat3::Identity() + 0.5 * k + k * k / 6.0;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * k +
         (theta - std::sin(theta)) / (t2 * theta) * k * k;
}

Mat3 rotationExp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-12) return Mat3::Identity() + hat(phi);
  return Eigen::AngleAxisd(theta, phi / theta).toRotationMatrix();
}

}  // namespace

Pose Pose::exp(const Vec6& twist) {
  const Vec3 rho = twist.head<3>();
  const Vec3 phi = twist.tail<3>();
  return {rotationExp(phi), Vec3(leftJacobian(phi) * rho)};
}

Vec6 Pose::log() const {
  const Eigen::AngleAxisd aa(rotation_);
  const Vec3 phi = aa.axis() * aa.angle();
  Vec6 out;
  out.head<3>() = leftJacobian(phi).inverse() * translation_;
  out.tail<3>() = phi;
  return out;
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

void Pose::normalize() {
  Eigen::JacobiSVD<Mat3> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  rotation_ = r;
}

bool Pose::isValid(double tol) const {
  if (!rotation_.allFinite() || !translation_.allFinite()) return false;
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation_.determinant() - 1.0) <= tol;
}

double Pose::rotationAngle() const {
  const Vec3 axis(rotation_(2, 1) - rotation_(1, 2), rotation_(0, 2) - rotation_(2, 0),
                  rotation_(1, 0) - rotation_(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (rotation_.trace() - 1.0));
}

PoseDelta poseDelta(const Pose& a, const Pose& b) {
  const Pose d = a.inverse() * b;
  return {d.rotationAngle(), (a.translation() - b.translation()).norm()};
}

}  // namespace gsicp
