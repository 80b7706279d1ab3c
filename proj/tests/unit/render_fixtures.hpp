#pragma once

#include <cmath>
#include <random>

#include "gsicp/render.hpp"
#include "test_helpers.hpp"

// Small random scenes and parameter accessors shared by the renderer checks.
namespace renderfix {

using namespace gsicp;

inline Intrinsics smallIntrinsics(int size = 16, double f = 16.0) {
  return {f, f, 0.5 * (size - 1), 0.5 * (size - 1), size, size};
}

inline GaussianSet randomScene(std::mt19937_64& rng, int n, const Pose& camera_to_world) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GaussianSet s;
  for (int i = 0; i < n; ++i) {
    const Vec3 pc(-0.4 + 0.8 * u(rng), -0.4 + 0.8 * u(rng), 1.5 + 1.5 * u(rng));
    const Vec3 ls(std::log(0.08 + 0.22 * u(rng)), std::log(0.08 + 0.22 * u(rng)),
                  std::log(0.08 + 0.22 * u(rng)));
    s.push_back(camera_to_world * pc, testutil::randomQuaternion(rng), ls,
                Vec3(u(rng), u(rng), u(rng)), logit(0.3 + 0.6 * u(rng)));
  }
  return s;
}

// Scalar objective sum(wr * rgb) + sum(wd * depth).
struct Objective {
  Image wr, wd;
  double operator()(const GaussianSet& s, const Pose& w2c, const Intrinsics& k) const {
    const RenderedFrame f = render(s, w2c, k);
    double v = 0.0;
    for (std::size_t i = 0; i < wr.data.size(); ++i) v += wr.data[i] * f.rgb.data[i];
    for (std::size_t i = 0; i < wd.data.size(); ++i) v += wd.data[i] * f.depth.data[i];
    return v;
  }
};

inline double& paramRef(GaussianSet& s, int cls, int i, int c) {
  switch (cls) {
    case 0:
      return s.means[i][c];
    case 1:
      return s.rotations[i][c];
    case 2:
      return s.log_scales[i][c];
    case 3:
      return s.colors[i][c];
    default:
      return s.opacity_logits[i];
  }
}

inline constexpr int kDims[5] = {3, 4, 3, 3, 1};
inline const char* kNames[5] = {"means", "rotations", "log_scales", "colors", "opacity"};

inline double analyticGrad(const GaussianGrads& g, int cls, int i, int c) {
  switch (cls) {
    case 0:
      return g.means[i][c];
    case 1:
      return g.rotations[i][c];
    case 2:
      return g.log_scales[i][c];
    case 3:
      return g.colors[i][c];
    default:
      return g.opacity_logits[i];
  }
}

}  // namespace renderfix
