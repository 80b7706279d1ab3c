#include "gsicp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "gsicp/errors.hpp"

namespace gsicp {

double psnr(const Image& img, const Image& gt) {
  if (!img.sameShape(gt)) throw InputError("psnr: image shapes differ");
  if (img.empty()) throw InputError("psnr: empty image");
  double se = 0.0;
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const double d = img.data[i] - gt.data[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(img.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

Pose alignRigid(const std::vector<Vec3>& est, const std::vector<Vec3>& gt) {
  const std::size_t n = est.size();
  Vec3 me = Vec3::Zero();
  Vec3 mg = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    me += est[i];
    mg += gt[i];
  }
  me /= static_cast<double>(n);
  mg /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  for (std::size_t i = 0; i < n; ++i) cov += (gt[i] - mg) * (est[i] - me).transpose();
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) s(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * s * svd.matrixV().transpose();
  return {r, Vec3(mg - r * me)};
}

AteResult absoluteTrajectoryError(const Trajectory& est, const Trajectory& gt, bool align,
                                  double max_dt) {
  std::vector<Vec3> pe;
  std::vector<Vec3> pg;
  std::vector<double> gt_stamps(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) gt_stamps[i] = gt[i].stamp;
  const bool sorted = std::is_sorted(gt_stamps.begin(), gt_stamps.end());
  for (const auto& e : est) {
    std::size_t best = gt.size();
    double best_dt = max_dt;
    if (sorted) {
      const auto it = std::lower_bound(gt_stamps.begin(), gt_stamps.end(), e.stamp);
      const std::size_t hi = static_cast<std::size_t>(it - gt_stamps.begin());
      for (std::size_t j : {hi == 0 ? hi : hi - 1, hi}) {
        if (j >= gt.size()) continue;
        const double dt = std::abs(gt_stamps[j] - e.stamp);
        if (dt <= best_dt) {
          best_dt = dt;
          best = j;
        }
      }
    } else {
      for (std::size_t j = 0; j < gt.size(); ++j) {
        const double dt = std::abs(gt_stamps[j] - e.stamp);
        if (dt <= best_dt) {
          best_dt = dt;
          best = j;
        }
      }
    }
    if (best == gt.size()) continue;
    pe.push_back(e.translation);
    pg.push_back(gt[best].translation);
  }
  if (pe.size() < 2) throw InputError("ate: fewer than 2 matched poses");

  AteResult res;
  res.matched = static_cast<int>(pe.size());
  if (align) res.alignment = alignRigid(pe, pg);
  double se = 0.0;
  for (std::size_t i = 0; i < pe.size(); ++i) se += (res.alignment * pe[i] - pg[i]).squaredNorm();
  res.rmse_cm = std::sqrt(se / static_cast<double>(pe.size())) * 100.0;
  return res;
}

double ateRmse(const Trajectory& est, const Trajectory& gt, bool align, double max_dt) {
  return absoluteTrajectoryError(est, gt, align, max_dt).rmse_cm;
}

}  // namespace gsicp
