#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gsicp/se3.hpp"
#include "gsicp/types.hpp"

namespace gsicp {

/// One trajectory sample; the rotation is kept as a quaternion so text
/// round-trips are exact.
struct StampedPose {
  double stamp = 0.0;
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static StampedPose fromPose(double stamp, const Pose& pose);
  Pose pose() const { return {rotation, translation}; }
};

using Trajectory = std::vector<StampedPose>;

/// Flips the quaternion so that w >= 0.
Quat canonicalQuaternion(const Quat& q);

/// `timestamp tx ty tz qx qy qz qw`, shortest round-trip decimal form.
std::string formatTrajectoryLine(const StampedPose& p);

/// Writes TUM text format. Quaternions are canonicalised (w >= 0).
void writeTrajectory(const Trajectory& traj, const std::filesystem::path& path);

/// Reads TUM text format; '#' lines and blank lines are ignored. Throws
/// FormatError with the line number on malformed input or non-increasing stamps.
Trajectory readTrajectory(const std::filesystem::path& path);
Trajectory parseTrajectory(const std::string& text);

}  // namespace gsicp
