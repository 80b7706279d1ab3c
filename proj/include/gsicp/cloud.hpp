#pragma once

#include <cstddef>
#include <vector>

#include "gsicp/image.hpp"
#include "gsicp/kdtree.hpp"
#include "gsicp/types.hpp"

namespace gsicp {

/// Camera-frame points with parallel RGB colours in [0,1].
struct PointCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> colors;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Per-point covariances parallel to a PointCloud.
struct CovarianceSet {
  std::vector<Mat3> covariances;
  /// Set when the cloud held fewer than k points and every neighbourhood is the whole cloud.
  bool low_support = false;

  std::size_t size() const { return covariances.size(); }
};

struct CloudConfig {
  int stride = 4;
  double z_min = 0.1;
  double z_max = 10.0;
  /// Voxel filter edge length in metres; <= 0 disables the filter.
  double voxel_size = 0.0;
  int knn = 20;
  double eigen_floor = 1e-6;
};

/// Back-projects every stride-th pixel with depth inside [z_min, z_max].
/// Throws DegenerateFrame when nothing survives.
PointCloud reprojectDepth(const Frame& frame, int stride, double z_min = 0.1, double z_max = 10.0);

/// Replaces the points of each occupied voxel by their centroid. Output is
/// ordered by voxel key.
PointCloud voxelDownsample(const PointCloud& cloud, double voxel_size);

/// Clamps the eigenvalues of a symmetric matrix to at least `floor`.
Mat3 floorEigenvalues(const Mat3& c, double floor);

/// Sample covariance (normalised by k) of each point's k nearest neighbours,
/// the point itself included.
CovarianceSet knnCovariances(const PointCloud& cloud, int k, double eigen_floor = 1e-6);
CovarianceSet knnCovariances(const PointCloud& cloud, const KdTree& index, int k,
                             double eigen_floor = 1e-6);

/// Full frontend: reproject, optional voxel filter.
PointCloud buildCloud(const Frame& frame, const CloudConfig& cfg);

}  // namespace gsicp
