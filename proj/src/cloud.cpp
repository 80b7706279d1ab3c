#include "gsicp/cloud.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "gsicp/errors.hpp"

namespace gsicp {

PointCloud reprojectDepth(const Frame& frame, int stride, double z_min, double z_max) {
  const Intrinsics& k = frame.intrinsics;
  if (!(k.fx > 0.0 && k.fy > 0.0)) throw InputError("reprojectDepth: invalid intrinsics");
  if (stride < 1) throw InputError("reprojectDepth: stride must be >= 1");
  if (frame.depth.channels != 1) throw InputError("reprojectDepth: depth must be single channel");
  const bool has_color = !frame.color.empty();
  if (has_color && (frame.color.width != frame.depth.width ||
                    frame.color.height != frame.depth.height || frame.color.channels != 3)) {
    throw InputError("reprojectDepth: colour and depth dimensions differ");
  }

  PointCloud cloud;
  for (int v = 0; v < frame.depth.height; v += stride) {
    for (int u = 0; u < frame.depth.width; u += stride) {
      const double d = frame.depth.at(u, v);
      if (!std::isfinite(d) || d < z_min || d > z_max) continue;
      cloud.points.emplace_back((u - k.cx) * d / k.fx, (v - k.cy) * d / k.fy, d);
      if (has_color) {
        cloud.colors.emplace_back(frame.color.at(u, v, 0), frame.color.at(u, v, 1),
                                  frame.color.at(u, v, 2));
      } else {
        cloud.colors.emplace_back(0.5, 0.5, 0.5);
      }
    }
  }
  if (cloud.empty()) throw DegenerateFrame("reprojectDepth: no valid depth in frame");
  return cloud;
}

PointCloud voxelDownsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw InputError("voxelDownsample: voxel size must be positive");
  using Key = std::tuple<long long, long long, long long>;
  struct Acc {
    Vec3 p = Vec3::Zero();
    Vec3 c = Vec3::Zero();
    int n = 0;
  };
  std::map<Key, Acc> voxels;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.points[i];
    const Key key{static_cast<long long>(std::floor(p.x() / voxel_size)),
                  static_cast<long long>(std::floor(p.y() / voxel_size)),
                  static_cast<long long>(std::floor(p.z() / voxel_size))};
    Acc& a = voxels[key];
    a.p += p;
    if (i < cloud.colors.size()) a.c += cloud.colors[i];
    ++a.n;
  }
  PointCloud out;
  out.points.reserve(voxels.size());
  out.colors.reserve(voxels.size());
  for (const auto& [key, a] : voxels) {
    // A single member is copied verbatim so the filter is idempotent.
    out.points.push_back(a.n == 1 ? a.p : Vec3(a.p / a.n));
    out.colors.push_back(a.n == 1 ? a.c : Vec3(a.c / a.n));
  }
  return out;
}

Mat3 floorEigenvalues(const Mat3& c, double floor) {
  const Eigen::SelfAdjointEigenSolver<Mat3> es(c);
  const Vec3 ev = es.eigenvalues().cwiseMax(floor);
  Mat3 out = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

CovarianceSet knnCovariances(const PointCloud& cloud, const KdTree& index, int k,
                             double eigen_floor) {
  if (cloud.empty()) throw InputError("knnCovariances: empty cloud");
  if (k < 1) throw InputError("knnCovariances: k must be positive");
  CovarianceSet out;
  out.low_support = cloud.size() < static_cast<std::size_t>(k);
  out.covariances.resize(cloud.size());
  std::vector<KdTree::Neighbor> nn;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    index.knn(cloud.points[i], k, nn);
    Vec3 mean = Vec3::Zero();
    for (const auto& n : nn) mean += cloud.points[n.index];
    mean /= static_cast<double>(nn.size());
    Mat3 cov = Mat3::Zero();
    for (const auto& n : nn) {
      const Vec3 d = cloud.points[n.index] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nn.size());
    out.covariances[i] = floorEigenvalues(cov, eigen_floor);
  }
  return out;
}

CovarianceSet knnCovariances(const PointCloud& cloud, int k, double eigen_floor) {
  if (cloud.empty()) throw InputError("knnCovariances: empty cloud");
  const KdTree index(cloud.points);
  return knnCovariances(cloud, index, k, eigen_floor);
}

PointCloud buildCloud(const Frame& frame, const CloudConfig& cfg) {
  PointCloud cloud = reprojectDepth(frame, cfg.stride, cfg.z_min, cfg.z_max);
  if (cfg.voxel_size > 0.0) cloud = voxelDownsample(cloud, cfg.voxel_size);
  return cloud;
}

}  // namespace gsicp
