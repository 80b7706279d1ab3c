#include "gsicp/trajectory.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "gsicp/errors.hpp"

namespace gsicp {

Quat canonicalQuaternion(const Quat& q) {
  Quat out = q;
  if (out.w() < 0.0) out.coeffs() *= -1.0;
  return out;
}

StampedPose StampedPose::fromPose(double stamp, const Pose& pose) {
  return {stamp, canonicalQuaternion(pose.quaternion()), pose.translation()};
}

namespace {

void appendNumber(std::string& out, double v) {
  char buf[64];
  // Shortest representation that parses back to the same double.
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, res.ptr);
}

}  // namespace

std::string formatTrajectoryLine(const StampedPose& p) {
  const Quat q = canonicalQuaternion(p.rotation);
  std::string line;
  const double values[8] = {p.stamp,   p.translation.x(), p.translation.y(), p.translation.z(),
                            q.x(),     q.y(),             q.z(),             q.w()};
  for (int i = 0; i < 8; ++i) {
    if (i) line.push_back(' ');
    appendNumber(line, values[i] == 0.0 ? 0.0 : values[i]);  // drop -0
  }
  return line;
}

void writeTrajectory(const Trajectory& traj, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  for (const auto& p : traj) out << formatTrajectoryLine(p) << '\n';
  if (!out) throw FormatError("write failed for " + path.string());
}

Trajectory parseTrajectory(const std::string& text) {
  Trajectory traj;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    double v[8];
    const char* p = line.data() + first;
    const char* end = line.data() + line.size();
    for (int i = 0; i < 8; ++i) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      const auto res = std::from_chars(p, end, v[i]);
      if (res.ec != std::errc()) {
        throw FormatError("trajectory line " + std::to_string(line_no) + ": expected 8 numbers");
      }
      p = res.ptr;
    }
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (p != end) {
      throw FormatError("trajectory line " + std::to_string(line_no) + ": trailing characters");
    }
    if (!traj.empty() && !(v[0] > traj.back().stamp)) {
      throw FormatError("trajectory line " + std::to_string(line_no) +
                        ": timestamps must strictly increase");
    }
    StampedPose sp;
    sp.stamp = v[0];
    sp.translation = Vec3(v[1], v[2], v[3]);
    sp.rotation = Quat(v[7], v[4], v[5], v[6]);
    traj.push_back(sp);
  }
  return traj;
}

Trajectory readTrajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open trajectory " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parseTrajectory(ss.str());
}

}  // namespace gsicp
