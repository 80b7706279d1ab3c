#include "gsicp/gicp.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

namespace gsicp {

Regularization parseRegularization(const std::string& s) {
  if (s == "none") return Regularization::None;
  if (s == "plane") return Regularization::Plane;
  if (s == "ellipse") return Regularization::Ellipse;
  throw InputError("unknown regularization mode '" + s + "'");
}

std::string toString(Regularization r) {
  switch (r) {
    case Regularization::None:
      return "none";
    case Regularization::Plane:
      return "plane";
    case Regularization::Ellipse:
      return "ellipse";
  }
  return "?";
}

CovDecomposition decomposeCovariance(const Mat3& c, double eigen_floor) {
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  if (!c.allFinite() || (c - c.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) {
    throw InputError("decomposeCovariance: matrix is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Mat3> es(c);
  // Eigen returns ascending eigenvalues; reverse to descending.
  CovDecomposition d;
  for (int i = 0; i < 3; ++i) {
    d.axes.col(i) = es.eigenvectors().col(2 - i);
    d.scales[i] = std::sqrt(std::max(es.eigenvalues()[2 - i], eigen_floor));
  }
  if (d.axes.determinant() < 0.0) d.axes.col(2) *= -1.0;
  return d;
}

Mat3 reconstructCovariance(const CovDecomposition& d) {
  const Vec3 var = d.scales.cwiseProduct(d.scales);
  return d.axes * var.asDiagonal() * d.axes.transpose();
}

CovDecomposition ellipseDecomposition(const CovDecomposition& d, double plane_eps,
                                      double eigen_floor) {
  CovDecomposition out = d;
  const double median = d.scales[1];
  if (median <= std::sqrt(eigen_floor) * (1.0 + 1e-9)) {
    out.scales = Vec3(1.0, 1.0, plane_eps);
  } else {
    out.scales = d.scales / median;
  }
  return out;
}

RegularizedCov regularizeDecomposition(const CovDecomposition& d, Regularization mode,
                                       double plane_eps, double eigen_floor) {
  switch (mode) {
    case Regularization::None:
      return {reconstructCovariance(d), false};
    case Regularization::Plane: {
      CovDecomposition p = d;
      p.scales = Vec3(1.0, 1.0, plane_eps);
      return {reconstructCovariance(p), false};
    }
    case Regularization::Ellipse: {
      const bool degenerate = d.scales[1] <= std::sqrt(eigen_floor) * (1.0 + 1e-9);
      return {reconstructCovariance(ellipseDecomposition(d, plane_eps, eigen_floor)), degenerate};
    }
  }
  throw InputError("regularizeDecomposition: bad mode");
}

RegularizedCov regularizeCovariance(const Mat3& c, Regularization mode, double plane_eps,
                                    double eigen_floor) {
  if (mode == Regularization::None) {
    decomposeCovariance(c, eigen_floor);  // validates symmetry
    return {c, false};
  }
  return regularizeDecomposition(decomposeCovariance(c, eigen_floor), mode, plane_eps,
                                 eigen_floor);
}

double mleCost(std::span<const Vec3> residuals, std::span<const Mat3> fused_covariances) {
  if (residuals.size() != fused_covariances.size()) {
    throw InputError("mleCost: residual and covariance counts differ");
  }
  double cost = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    const Eigen::LLT<Mat3> llt(fused_covariances[i]);
    if (llt.info() != Eigen::Success || !fused_covariances[i].allFinite()) {
      throw NumericError("mleCost: fused covariance of pair " + std::to_string(i) +
                         " is not positive definite");
    }
    cost += residuals[i].dot(llt.solve(residuals[i]));
  }
  return cost;
}

int CorrespondenceReport::countWithin(double threshold) const {
  return static_cast<int>(
      std::count_if(distances.begin(), distances.end(), [&](double d) { return d < threshold; }));
}

namespace {

struct Linearization {
  std::vector<std::pair<int, int>> pairs;
  std::vector<Mat3> information;
};

double evalCost(const GaussianView& source, const GaussianView& target, const Linearization& lin,
                const Pose& t) {
  double cost = 0.0;
  for (std::size_t k = 0; k < lin.pairs.size(); ++k) {
    const auto [s, g] = lin.pairs[k];
    const Vec3 d = target.means[g] - t * source.means[s];
    cost += d.dot(lin.information[k] * d);
  }
  return cost;
}

}  // namespace

AlignResult align(const GaussianView& source, const KdTree& target_index,
                  const GaussianView& target, const Pose& init, const GicpConfig& cfg) {
  if (source.size() == 0) throw InputError("align: empty source");
  if (target.size() == 0 || target_index.empty()) throw InputError("align: empty target");
  if (source.covariances.size() != source.size() || target.covariances.size() != target.size()) {
    throw InputError("align: covariance count mismatch");
  }

  const double max_d2 = cfg.max_corr_dist * cfg.max_corr_dist;
  AlignResult result;
  Pose pose = init;
  Linearization lin;
  lin.pairs.reserve(source.size());
  lin.information.reserve(source.size());

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    result.iterations = iter + 1;
    lin.pairs.clear();
    lin.information.clear();
    const Mat3& r = pose.rotation();
    for (std::size_t i = 0; i < source.size(); ++i) {
      const Vec3 p = pose * source.means[i];
      const KdTree::Neighbor nn = target_index.nearest(p);
      if (nn.index < 0 || nn.dist2 > max_d2) continue;
      const Mat3 fused = target.covariances[nn.index] + r * source.covariances[i] * r.transpose();
      const Eigen::LDLT<Mat3> ldlt(fused);
      if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) continue;
      lin.pairs.emplace_back(static_cast<int>(i), nn.index);
      lin.information.push_back(ldlt.solve(Mat3::Identity()));
    }
    if (static_cast<int>(lin.pairs.size()) < cfg.min_pairs) {
      throw TrackingLost("align: only " + std::to_string(lin.pairs.size()) +
                             " correspondences within max_corr_dist",
                         pose, static_cast<int>(lin.pairs.size()));
    }

    Mat6 h = Mat6::Zero();
    Vec6 b = Vec6::Zero();
    double cost = 0.0;
    for (std::size_t k = 0; k < lin.pairs.size(); ++k) {
      const auto [s, g] = lin.pairs[k];
      const Vec3 p = pose * source.means[s];
      const Vec3 d = target.means[g] - p;
      Eigen::Matrix<double, 3, 6> j;
      j.leftCols<3>() = -Mat3::Identity();
      j.rightCols<3>() = hat(p);
      const Eigen::Matrix<double, 6, 3> jt_info = j.transpose() * lin.information[k];
      h.noalias() += jt_info * j;
      b.noalias() += jt_info * d;
      cost += d.dot(lin.information[k] * d);
    }
    if (iter == 0) result.initial_cost = cost;

    Vec6 delta = -h.ldlt().solve(b);
    if (!delta.allFinite()) throw NumericError("align: singular normal equations");

    double accepted_cost = cost;
    bool accepted = false;
    for (int halving = 0; halving <= cfg.max_halvings; ++halving) {
      const Pose candidate = pose.leftUpdate(delta);
      const double c = evalCost(source, target, lin, candidate);
      if (c <= cost) {
        pose = candidate;
        accepted_cost = c;
        accepted = true;
        break;
      }
      delta *= 0.5;
    }

    // Report reflects the correspondences of this iteration at the accepted pose.
    CorrespondenceReport& rep = result.report;
    rep.pairs = lin.pairs;
    rep.residuals.resize(lin.pairs.size());
    rep.distances.resize(lin.pairs.size());
    for (std::size_t k = 0; k < lin.pairs.size(); ++k) {
      const auto [s, g] = lin.pairs[k];
      rep.residuals[k] = target.means[g] - pose * source.means[s];
      rep.distances[k] = rep.residuals[k].norm();
    }
    rep.cost = accepted_cost;
    rep.inlier_count = static_cast<int>(lin.pairs.size());

    if (!accepted || delta.norm() < cfg.convergence_eps) {
      result.converged = true;
      break;
    }
  }
  result.max_iterations_reached = !result.converged;
  pose.normalize();
  result.pose = pose;
  return result;
}

}  // namespace gsicp
