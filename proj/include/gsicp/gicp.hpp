#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gsicp/errors.hpp"
#include "gsicp/kdtree.hpp"
#include "gsicp/se3.hpp"
#include "gsicp/types.hpp"

namespace gsicp {

enum class Regularization { None, Plane, Ellipse };

Regularization parseRegularization(const std::string& s);
std::string toString(Regularization r);

/// C = axes * diag(scales)^2 * axes^T with scales sorted descending.
struct CovDecomposition {
  Mat3 axes = Mat3::Identity();
  Vec3 scales = Vec3::Ones();
};

/// Eigen-decomposition with eigenvalues floored at `eigen_floor`; axes are a
/// proper rotation. Throws InputError for a non-symmetric matrix.
CovDecomposition decomposeCovariance(const Mat3& c, double eigen_floor = 1e-6);
Mat3 reconstructCovariance(const CovDecomposition& d);

struct RegularizedCov {
  Mat3 covariance;
  /// The middle scale was at the floor; plane shape was substituted.
  bool degenerate = false;
};

RegularizedCov regularizeDecomposition(const CovDecomposition& d, Regularization mode,
                                       double plane_eps = 1e-3, double eigen_floor = 1e-6);
RegularizedCov regularizeCovariance(const Mat3& c, Regularization mode, double plane_eps = 1e-3,
                                    double eigen_floor = 1e-6);

/// Ellipse-regularised decomposition: scales divided by the median scale.
/// Falls back to plane scales (1, 1, eps) for a degenerate input.
CovDecomposition ellipseDecomposition(const CovDecomposition& d, double plane_eps = 1e-3,
                                      double eigen_floor = 1e-6);

/// Sum of d_i^T F_i^{-1} d_i over fused covariances F_i. Throws NumericError
/// naming the first pair whose fused covariance is not positive definite.
double mleCost(std::span<const Vec3> residuals, std::span<const Mat3> fused_covariances);

/// Means and covariances of a Gaussian set; covariances already regularised.
struct GaussianView {
  std::span<const Vec3> means;
  std::span<const Mat3> covariances;

  std::size_t size() const { return means.size(); }
};

struct GicpConfig {
  Regularization mode = Regularization::Ellipse;
  double plane_eps = 1e-3;
  double max_corr_dist = 0.5;
  int min_pairs = 50;
  int max_iterations = 30;
  double convergence_eps = 1e-6;
  int max_halvings = 12;
};

struct CorrespondenceReport {
  std::vector<std::pair<int, int>> pairs;  // (source, target)
  std::vector<Vec3> residuals;             // target - T * source
  std::vector<double> distances;           // |residual|
  double cost = 0.0;
  int inlier_count = 0;

  /// Pairs whose Euclidean residual is below `threshold`.
  int countWithin(double threshold) const;
};

struct AlignResult {
  Pose pose;
  CorrespondenceReport report;
  int iterations = 0;
  bool converged = false;
  /// Iteration cap reached before the update norm fell below the tolerance.
  bool max_iterations_reached = false;
  double initial_cost = 0.0;
};

/// Raised when too few correspondences survive the distance gate.
class TrackingLost : public Error {
 public:
  TrackingLost(const std::string& what, const Pose& last_valid, int pairs)
      : Error(what), last_valid_(last_valid), pairs_(pairs) {}
  const Pose& lastValidPose() const { return last_valid_; }
  int pairs() const { return pairs_; }

 private:
  Pose last_valid_;
  int pairs_;
};

/// Generalised-ICP: finds T minimising sum d_i^T (C_t + R C_s R^T)^{-1} d_i
/// with nearest-neighbour correspondences of T * x_s in the target.
AlignResult align(const GaussianView& source, const KdTree& target_index,
                  const GaussianView& target, const Pose& init, const GicpConfig& cfg);

}  // namespace gsicp
