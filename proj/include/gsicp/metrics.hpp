#pragma once

#include "gsicp/image.hpp"
#include "gsicp/se3.hpp"
#include "gsicp/trajectory.hpp"

namespace gsicp {

/// 10 log10(1 / MSE). Identical images return +infinity.
double psnr(const Image& img, const Image& gt);

struct AteResult {
  double rmse_cm = 0.0;
  int matched = 0;
  /// Transform applied to the estimate (identity when align == false).
  Pose alignment;
};

/// Closed-form rigid (rotation + translation, no scale) least-squares fit of
/// `est` positions onto `gt` positions.
Pose alignRigid(const std::vector<Vec3>& est, const std::vector<Vec3>& gt);

/// RMSE of translational error in centimetres. Poses are matched by nearest
/// timestamp within max_dt. Throws InputError with fewer than 2 matches.
AteResult absoluteTrajectoryError(const Trajectory& est, const Trajectory& gt, bool align,
                                  double max_dt = 0.02);
double ateRmse(const Trajectory& est, const Trajectory& gt, bool align, double max_dt = 0.02);

}  // namespace gsicp
