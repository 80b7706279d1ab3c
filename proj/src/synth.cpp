#include "gsicp/synth.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "gsicp/errors.hpp"

namespace gsicp {

namespace {

constexpr double kTwoPi = 6.283185307179586;

Pose lookAt(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-9) right = Vec3::UnitX();
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 r;
  r.col(0) = right;
  r.col(1) = down;
  r.col(2) = forward;
  return {r, eye};
}

Mat3 yawMatrix(double yaw) { return Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(); }

// Face-local texture coordinates for a point on an axis-aligned face.
Vec2 faceUv(const Vec3& p, int axis) {
  switch (axis) {
    case 0:
      return {p.y(), p.z()};
    case 1:
      return {p.x(), p.z()};
    default:
      return {p.x(), p.y()};
  }
}

}  // namespace

SynthSpec SynthSpec::defaultScene() {
  SynthSpec s;
  s.boxes = {{Vec3(0.35, 0.25, 0.30), Vec3(0.35, 0.25, 0.30), 0.4},
             {Vec3(-0.55, -0.35, 0.20), Vec3(0.20, 0.30, 0.20), -0.3},
             {Vec3(0.15, -0.75, 0.45), Vec3(0.15, 0.15, 0.45), 0.9}};
  s.spheres = {{Vec3(-0.45, 0.65, 0.35), 0.30}};
  return s;
}

SynthScene::SynthScene(SynthSpec spec) : spec_(std::move(spec)) {
  if (!spec_.intrinsics.valid()) throw InputError("synth: invalid intrinsics");
  if (spec_.frames < 1) throw InputError("synth: frame count must be positive");
  if ((spec_.room_max - spec_.room_min).minCoeff() <= 0.0) throw InputError("synth: empty room");

  const int surfaces = 6 + 6 * static_cast<int>(spec_.boxes.size()) +
                       static_cast<int>(spec_.spheres.size());
  std::mt19937_64 rng(spec_.texture_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  textures_.resize(surfaces);
  for (auto& t : textures_) {
    t.base = Vec3(0.25 + 0.5 * unit(rng), 0.25 + 0.5 * unit(rng), 0.25 + 0.5 * unit(rng));
    for (int k = 0; k < 3; ++k) {
      const double ang = kTwoPi * unit(rng);
      t.dirs.emplace_back(std::cos(ang), std::sin(ang));
      t.freqs.push_back(0.3 + 0.8 * unit(rng));
      t.phases.push_back(kTwoPi * unit(rng));
      t.amps.emplace_back(0.3 * (unit(rng) - 0.5), 0.3 * (unit(rng) - 0.5),
                          0.3 * (unit(rng) - 0.5));
    }
  }
}

Pose SynthScene::pathPose(int i) const {
  const double s = spec_.frames > 1 ? static_cast<double>(i) / spec_.frames : 0.0;
  if (spec_.path == SynthPath::Line) {
    const double a = spec_.frames > 1 ? static_cast<double>(i) / (spec_.frames - 1) : 0.0;
    const Vec3 eye = spec_.line_start + a * (spec_.line_end - spec_.line_start);
    return lookAt(eye, eye + spec_.line_look);
  }
  const double theta = spec_.orbit_start + spec_.orbit_arc * s;
  const Vec3 eye(spec_.look_at.x() + spec_.orbit_radius * std::cos(theta),
                 spec_.look_at.y() + spec_.orbit_radius * std::sin(theta), spec_.orbit_height);
  return lookAt(eye, spec_.look_at);
}

bool SynthScene::degeneratePath() const {
  if (spec_.frames < 2) return true;
  if (spec_.path == SynthPath::Line) return (spec_.line_end - spec_.line_start).norm() == 0.0;
  return spec_.orbit_arc == 0.0 || spec_.orbit_radius == 0.0;
}

std::optional<SynthScene::Hit> SynthScene::cast(const Vec3& o, const Vec3& d) const {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::optional<Hit> best;
  auto consider = [&](double t, int surface, const Vec2& uv) {
    if (t > 1e-9 && (!best || t < best->t)) best = Hit{t, surface, uv};
  };

  // Room interior: the ray leaves through the nearest exit plane.
  {
    double t_exit = inf;
    int axis = -1;
    int side = 0;
    for (int a = 0; a < 3; ++a) {
      if (d[a] > 0.0) {
        const double t = (spec_.room_max[a] - o[a]) / d[a];
        if (t < t_exit) t_exit = t, axis = a, side = 1;
      } else if (d[a] < 0.0) {
        const double t = (spec_.room_min[a] - o[a]) / d[a];
        if (t < t_exit) t_exit = t, axis = a, side = 0;
      }
    }
    if (axis >= 0) consider(t_exit, 2 * axis + side, faceUv(o + t_exit * d, axis));
  }

  for (std::size_t b = 0; b < spec_.boxes.size(); ++b) {
    const SynthBox& box = spec_.boxes[b];
    const Mat3 r = yawMatrix(box.yaw);
    const Vec3 lo = r.transpose() * (o - box.center);
    const Vec3 ld = r.transpose() * d;
    double t_near = -inf;
    double t_far = inf;
    int axis = -1;
    int side = 0;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (std::abs(ld[a]) < 1e-15) {
        if (std::abs(lo[a]) > box.half_extent[a]) miss = true;
        continue;
      }
      double t0 = (-box.half_extent[a] - lo[a]) / ld[a];
      double t1 = (box.half_extent[a] - lo[a]) / ld[a];
      int s0 = 0;
      if (t0 > t1) std::swap(t0, t1), s0 = 1;
      if (t0 > t_near) t_near = t0, axis = a, side = s0;
      t_far = std::min(t_far, t1);
      if (t_near > t_far) miss = true;
    }
    if (!miss && axis >= 0 && t_near > 0.0) {
      const int surface = 6 + 6 * static_cast<int>(b) + 2 * axis + side;
      consider(t_near, surface, faceUv(lo + t_near * ld, axis));
    }
  }

  for (std::size_t s = 0; s < spec_.spheres.size(); ++s) {
    const SynthSphere& sp = spec_.spheres[s];
    const Vec3 oc = o - sp.center;
    const double a = d.squaredNorm();
    const double hb = oc.dot(d);
    const double c = oc.squaredNorm() - sp.radius * sp.radius;
    const double disc = hb * hb - a * c;
    if (disc < 0.0) continue;
    const double t = (-hb - std::sqrt(disc)) / a;
    const Vec3 n = (oc + t * d) / sp.radius;
    const Vec2 uv(std::atan2(n.y(), n.x()) * sp.radius, std::asin(std::clamp(n.z(), -1.0, 1.0)) * sp.radius);
    consider(t, 6 + 6 * static_cast<int>(spec_.boxes.size()) + static_cast<int>(s), uv);
  }
  return best;
}

Vec3 SynthScene::shade(const Hit& hit) const {
  const Texture& t = textures_[hit.surface];
  Vec3 c = t.base;
  for (std::size_t k = 0; k < t.freqs.size(); ++k) {
    c += t.amps[k] * std::sin(kTwoPi * t.freqs[k] * t.dirs[k].dot(hit.uv) + t.phases[k]);
  }
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

std::optional<double> SynthScene::rayDepth(const Pose& c2w, double u, double v) const {
  const Intrinsics& k = spec_.intrinsics;
  const Vec3 dir_cam((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
  const auto hit = cast(c2w.translation(), c2w.rotation() * dir_cam);
  if (!hit) return std::nullopt;
  return hit->t;  // dir_cam has unit z, so t is the camera-frame depth
}

Frame SynthScene::renderFrame(const Pose& c2w, int index, double stamp) const {
  const Intrinsics& k = spec_.intrinsics;
  Frame f;
  f.intrinsics = k;
  f.index = index;
  f.timestamp = stamp;
  f.color = Image(k.width, k.height, 3);
  f.depth = Image(k.width, k.height, 1);
  std::mt19937_64 rng(spec_.noise_seed * 1000003ULL + static_cast<std::uint64_t>(index));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Vec3 origin = c2w.translation();
  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      const Vec3 dir = c2w.rotation() * Vec3((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
      const auto hit = cast(origin, dir);
      if (!hit) continue;
      double z = hit->t;
      Vec3 c = shade(*hit);
      if (spec_.depth_noise > 0.0) {
        const double sigma = spec_.depth_noise * (0.0012 + 0.0019 * (z - 0.4) * (z - 0.4));
        z = std::max(0.0, z + sigma * gauss(rng));
      }
      if (spec_.color_noise > 0.0) {
        for (int ch = 0; ch < 3; ++ch) c[ch] += spec_.color_noise * gauss(rng);
        c = c.cwiseMax(0.0).cwiseMin(1.0);
      }
      f.depth.at(u, v) = z;
      for (int ch = 0; ch < 3; ++ch) f.color.at(u, v, ch) = c[ch];
    }
  }
  return f;
}

DatasetStream SynthScene::stream() const {
  std::vector<double> stamps;
  std::vector<std::optional<Pose>> gt;
  for (int i = 0; i < spec_.frames; ++i) {
    stamps.push_back(static_cast<double>(i));
    gt.emplace_back(pathPose(i));
  }
  // The scene is copied into the loader so the stream outlives this object.
  auto scene = std::make_shared<SynthScene>(*this);
  auto loader = [scene](std::size_t i) {
    const int idx = static_cast<int>(i);
    return scene->renderFrame(scene->pathPose(idx), idx, static_cast<double>(i));
  };
  return DatasetStream(spec_.intrinsics, std::move(stamps), std::move(gt), std::move(loader));
}

Trajectory SynthScene::groundTruth() const {
  Trajectory out;
  for (int i = 0; i < spec_.frames; ++i) out.push_back(StampedPose::fromPose(i, pathPose(i)));
  return out;
}

}  // namespace gsicp
