#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "gsicp/dataset.hpp"
#include "gsicp/image.hpp"
#include "gsicp/se3.hpp"
#include "gsicp/types.hpp"

namespace gsicp {

struct SynthBox {
  Vec3 center = Vec3::Zero();
  Vec3 half_extent = Vec3::Constant(0.2);
  double yaw = 0.0;  // rotation about world z
};

struct SynthSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.2;
};

enum class SynthPath { Orbit, Line };

/// Textured box room with objects, seen by a pinhole camera moving on a path.
/// World z is up; cameras use x right, y down, z forward.
struct SynthSpec {
  Vec3 room_min{-2.5, -2.5, 0.0};
  Vec3 room_max{2.5, 2.5, 2.6};
  std::vector<SynthBox> boxes;
  std::vector<SynthSphere> spheres;
  std::uint64_t texture_seed = 1;

  Intrinsics intrinsics{110.0, 110.0, 79.5, 59.5, 160, 120};

  SynthPath path = SynthPath::Orbit;
  int frames = 200;
  double orbit_radius = 1.6;
  double orbit_height = 1.3;
  double orbit_arc = 6.283185307179586;  // radians covered by the sequence
  double orbit_start = 0.0;
  Vec3 look_at{0.0, 0.0, 0.4};
  // Line path: camera moves from line_start to line_end looking along line_dir.
  Vec3 line_start{0.0, -1.0, 1.2};
  Vec3 line_end{0.0, -0.5, 1.2};
  Vec3 line_look{0.0, 1.0, -0.3};

  /// Depth noise sigma = depth_noise * (0.0012 + 0.0019 (z - 0.4)^2); 0 disables.
  double depth_noise = 0.0;
  double color_noise = 0.0;
  std::uint64_t noise_seed = 7;

  /// Room plus three boxes and a sphere near the origin.
  static SynthSpec defaultScene();
};

class SynthScene {
 public:
  explicit SynthScene(SynthSpec spec);

  const SynthSpec& spec() const { return spec_; }

  /// Camera-to-world pose of path sample i.
  Pose pathPose(int i) const;

  /// Noise-free or noisy frame (per spec) rendered from `camera_to_world`.
  Frame renderFrame(const Pose& camera_to_world, int index, double stamp) const;

  /// Camera-frame z of the first surface along the ray through pixel (u, v);
  /// nullopt when nothing is hit.
  std::optional<double> rayDepth(const Pose& camera_to_world, double u, double v) const;

  /// Frames of the path with exact ground truth; stamps are frame indices.
  DatasetStream stream() const;
  Trajectory groundTruth() const;

  /// True when the path does not move the camera.
  bool degeneratePath() const;

 private:
  struct Hit {
    double t = 0.0;
    int surface = -1;
    Vec2 uv = Vec2::Zero();
  };
  struct Texture {
    Vec3 base;
    std::vector<Vec2> dirs;
    std::vector<double> freqs;
    std::vector<double> phases;
    std::vector<Vec3> amps;
  };

  std::optional<Hit> cast(const Vec3& origin, const Vec3& dir) const;
  Vec3 shade(const Hit& hit) const;

  SynthSpec spec_;
  std::vector<Texture> textures_;
};

}  // namespace gsicp
