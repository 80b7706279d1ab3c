#pragma once

#include <optional>
#include <vector>

#include "gsicp/gaussian_map.hpp"
#include "gsicp/image.hpp"
#include "gsicp/se3.hpp"
#include "gsicp/types.hpp"

namespace gsicp {

/// Numerical guards of the rasteriser.
struct RenderConfig {
  double near_plane = 0.05;
  double far_plane = 100.0;
  /// Added to the diagonal of every projected covariance (px^2).
  double lowpass = 0.3;
  double alpha_max = 0.99;
  /// A pixel stops compositing once transmittance would drop below this.
  double transmittance_stop = 1e-4;
  double alpha_min = 1.0 / 255.0;
  /// The projection Jacobian is evaluated no further off-axis than this
  /// multiple of the image half-extent.
  double jacobian_fov_margin = 1.3;
  /// Restrict each splat to the bounding box of its visible footprint and drop
  /// splats whose footprint misses the image. Disabling rasterises every splat
  /// over the whole image (slow, for verification).
  bool bbox_cull = true;
};

/// Image-plane footprint of one Gaussian.
struct Splat2D {
  int source = -1;  // index into the GaussianSet
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  Mat2 conic = Mat2::Identity();  // cov2d^{-1}
  double view_z = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  // Inclusive pixel bounds of the footprint, clipped to the image.
  int x0 = 0, x1 = -1, y0 = 0, y1 = -1;
  // Kept for the backward pass.
  Vec3 p_cam = Vec3::Zero();
};

/// EWA projection; std::nullopt when the primitive is culled.
std::optional<Splat2D> projectGaussian(const GaussianSet& set, int index,
                                       const Pose& world_to_camera, const Intrinsics& intrinsics,
                                       const RenderConfig& cfg = {});

struct RenderedFrame {
  Image rgb;    // H x W x 3
  Image depth;  // H x W, alpha-normalised expected depth; 0 where nothing contributes
  Image alpha;  // H x W, 1 - final transmittance
};

/// Forward state needed by the backward pass.
struct RenderState {
  std::vector<Splat2D> splats;  // sorted front to back
  std::vector<double> final_transmittance;
  std::vector<int> last_contributor;  // position in `splats`, -1 if none
  std::vector<double> weight_sum;     // sum alpha_i T_i
  std::vector<double> depth_sum;      // sum z_i alpha_i T_i
  int width = 0;
  int height = 0;
};

RenderedFrame render(const GaussianSet& set, const Pose& world_to_camera,
                     const Intrinsics& intrinsics, const RenderConfig& cfg = {},
                     RenderState* state = nullptr);

/// Gradients with the layout of GaussianSet.
struct GaussianGrads {
  std::vector<Vec3> means;
  std::vector<Vec4> rotations;
  std::vector<Vec3> log_scales;
  std::vector<Vec3> colors;
  std::vector<double> opacity_logits;
  /// Primitives that received any contribution in the view.
  std::vector<bool> touched;

  void resize(std::size_t n);
};

/// Analytic gradients of sum(d_rgb * rgb) + sum(d_depth * depth) with respect to
/// every parameter, given the forward state of the same view.
GaussianGrads renderBackward(const GaussianSet& set, const Pose& world_to_camera,
                             const Intrinsics& intrinsics, const RenderState& state,
                             const Image& d_rgb, const Image& d_depth,
                             const RenderConfig& cfg = {});

}  // namespace gsicp
