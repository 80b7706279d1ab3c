#include "gsicp/render.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gsicp/errors.hpp"

namespace gsicp {

namespace {

// Tangent bounds for the Jacobian, as in the reference rasteriser: beyond
// 1.3x the field of view the linearisation is evaluated at the bound.
struct JacobianClamp {
  double x, y;            // clamped x/z, y/z
  bool x_free, y_free;    // false when the bound is active
};

JacobianClamp clampTangents(const Vec3& p, const Intrinsics& k, const RenderConfig& cfg) {
  const double m = cfg.jacobian_fov_margin;
  const double xlo = -m * (k.cx + 0.5) / k.fx, xhi = m * (k.width - 0.5 - k.cx) / k.fx;
  const double ylo = -m * (k.cy + 0.5) / k.fy, yhi = m * (k.height - 0.5 - k.cy) / k.fy;
  const double tx = p.x() / p.z();
  const double ty = p.y() / p.z();
  return {std::clamp(tx, xlo, xhi), std::clamp(ty, ylo, yhi), tx >= xlo && tx <= xhi,
          ty >= ylo && ty <= yhi};
}

Eigen::Matrix<double, 2, 3> projectionJacobian(const Vec3& p, const Intrinsics& k,
                                               const RenderConfig& cfg) {
  const JacobianClamp c = clampTangents(p, k, cfg);
  const double z = p.z();
  Eigen::Matrix<double, 2, 3> j;
  j << k.fx / z, 0.0, -k.fx * c.x / z, 0.0, k.fy / z, -k.fy * c.y / z;
  return j;
}

}  // namespace

std::optional<Splat2D> projectGaussian(const GaussianSet& set, int index,
                                       const Pose& world_to_camera, const Intrinsics& k,
                                       const RenderConfig& cfg) {
  const Vec3 p = world_to_camera * set.means[index];
  if (!(p.z() > cfg.near_plane) || p.z() > cfg.far_plane) return std::nullopt;
  const double opacity = sigmoid(set.opacity_logits[index]);
  if (opacity < cfg.alpha_min) return std::nullopt;

  const double z = p.z();
  const Eigen::Matrix<double, 2, 3> m = projectionJacobian(p, k, cfg) * world_to_camera.rotation();
  const Mat3 sigma = covarianceFromParams(set.rotations[index], set.log_scales[index]);

  Splat2D s;
  s.source = index;
  s.p_cam = p;
  s.view_z = z;
  s.mean2d = Vec2(k.fx * p.x() / z + k.cx, k.fy * p.y() / z + k.cy);
  s.cov2d = m * sigma * m.transpose();
  s.cov2d(0, 0) += cfg.lowpass;
  s.cov2d(1, 1) += cfg.lowpass;
  const double det = s.cov2d.determinant();
  if (!(det > 0.0)) return std::nullopt;
  s.conic << s.cov2d(1, 1) / det, -s.cov2d(0, 1) / det, -s.cov2d(1, 0) / det, s.cov2d(0, 0) / det;
  s.color = set.colors[index];
  s.opacity = opacity;

  if (cfg.bbox_cull) {
    // alpha >= alpha_min needs Mahalanobis^2 <= 2 ln(opacity / alpha_min). The
    // box also covers at least 3 sigma.
    const double cutoff = 2.0 * std::log(opacity / cfg.alpha_min);
    const double m2 = std::max(9.0, cutoff) + 1e-9;
    const double rx = std::sqrt(m2 * s.cov2d(0, 0));
    const double ry = std::sqrt(m2 * s.cov2d(1, 1));
    s.x0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.x() - rx)));
    s.x1 = std::min(k.width - 1, static_cast<int>(std::floor(s.mean2d.x() + rx)));
    s.y0 = std::max(0, static_cast<int>(std::ceil(s.mean2d.y() - ry)));
    s.y1 = std::min(k.height - 1, static_cast<int>(std::floor(s.mean2d.y() + ry)));
    if (s.x0 > s.x1 || s.y0 > s.y1) return std::nullopt;
  } else {
    s.x0 = 0;
    s.x1 = k.width - 1;
    s.y0 = 0;
    s.y1 = k.height - 1;
  }
  return s;
}

namespace {

struct PixelAlpha {
  double alpha;
  double gauss;
  bool clamped;
};

// Alpha of a splat at a pixel; alpha == 0 means the splat is skipped there.
inline PixelAlpha pixelAlpha(const Splat2D& s, int x, int y, const RenderConfig& cfg) {
  const double dx = x - s.mean2d.x();
  const double dy = y - s.mean2d.y();
  const double power =
      -0.5 * (s.conic(0, 0) * dx * dx + 2.0 * s.conic(0, 1) * dx * dy + s.conic(1, 1) * dy * dy);
  if (power > 0.0) return {0.0, 0.0, false};
  const double g = std::exp(power);
  const double raw = s.opacity * g;
  const double a = std::min(cfg.alpha_max, raw);
  if (a < cfg.alpha_min) return {0.0, g, false};
  return {a, g, raw > cfg.alpha_max};
}

}  // namespace

RenderedFrame render(const GaussianSet& set, const Pose& world_to_camera, const Intrinsics& k,
                     const RenderConfig& cfg, RenderState* state_out) {
  if (!k.valid()) throw InputError("render: invalid intrinsics");
  const int w = k.width;
  const int h = k.height;
  const std::size_t npix = static_cast<std::size_t>(w) * h;

  RenderState local;
  RenderState& st = state_out ? *state_out : local;
  st = RenderState{};
  st.width = w;
  st.height = h;
  st.splats.reserve(set.size());
  for (int i = 0; i < static_cast<int>(set.size()); ++i) {
    if (auto s = projectGaussian(set, i, world_to_camera, k, cfg)) st.splats.push_back(*s);
  }
  std::sort(st.splats.begin(), st.splats.end(), [](const Splat2D& a, const Splat2D& b) {
    return a.view_z < b.view_z || (a.view_z == b.view_z && a.source < b.source);
  });

  st.final_transmittance.assign(npix, 1.0);
  st.last_contributor.assign(npix, -1);
  st.weight_sum.assign(npix, 0.0);
  st.depth_sum.assign(npix, 0.0);
  std::vector<char> done(npix, 0);
  RenderedFrame out{Image(w, h, 3), Image(w, h, 1), Image(w, h, 1)};

  for (int pos = 0; pos < static_cast<int>(st.splats.size()); ++pos) {
    const Splat2D& s = st.splats[pos];
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        if (done[pix]) continue;
        const PixelAlpha pa = pixelAlpha(s, x, y, cfg);
        if (pa.alpha == 0.0) continue;
        double& t = st.final_transmittance[pix];
        const double next = t * (1.0 - pa.alpha);
        if (next < cfg.transmittance_stop) {
          done[pix] = 1;
          continue;
        }
        const double weight = pa.alpha * t;
        double* rgb = &out.rgb.data[pix * 3];
        rgb[0] += s.color[0] * weight;
        rgb[1] += s.color[1] * weight;
        rgb[2] += s.color[2] * weight;
        st.weight_sum[pix] += weight;
        st.depth_sum[pix] += s.view_z * weight;
        st.last_contributor[pix] = pos;
        t = next;
      }
    }
  }

  for (std::size_t pix = 0; pix < npix; ++pix) {
    const double a = st.weight_sum[pix];
    out.depth.data[pix] = a > 0.0 ? st.depth_sum[pix] / a : 0.0;
    out.alpha.data[pix] = 1.0 - st.final_transmittance[pix];
  }
  return out;
}

void GaussianGrads::resize(std::size_t n) {
  means.assign(n, Vec3::Zero());
  rotations.assign(n, Vec4::Zero());
  log_scales.assign(n, Vec3::Zero());
  colors.assign(n, Vec3::Zero());
  opacity_logits.assign(n, 0.0);
  touched.assign(n, false);
}

namespace {

// Per-splat accumulators in image space.
struct SplatGrad {
  Vec2 mean2d = Vec2::Zero();
  Mat2 conic = Mat2::Zero();
  double view_z = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  bool touched = false;
};

// dL/dq for R(q / |q|) given dL/dR.
Vec4 quaternionGrad(const Vec4& q_raw, const Mat3& dr) {
  const double norm = q_raw.norm();
  const Vec4 q = q_raw / norm;
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Vec4 g;
  g[0] = 2.0 * (-z * dr(0, 1) + y * dr(0, 2) + z * dr(1, 0) - x * dr(1, 2) - y * dr(2, 0) +
                x * dr(2, 1));
  g[1] = 2.0 * (y * dr(0, 1) + z * dr(0, 2) + y * dr(1, 0) - 2.0 * x * dr(1, 1) - w * dr(1, 2) +
                z * dr(2, 0) + w * dr(2, 1) - 2.0 * x * dr(2, 2));
  g[2] = 2.0 * (-2.0 * y * dr(0, 0) + x * dr(0, 1) + w * dr(0, 2) + x * dr(1, 0) + z * dr(1, 2) -
                w * dr(2, 0) + z * dr(2, 1) - 2.0 * y * dr(2, 2));
  g[3] = 2.0 * (-2.0 * z * dr(0, 0) - w * dr(0, 1) + x * dr(0, 2) + w * dr(1, 0) -
                2.0 * z * dr(1, 1) + y * dr(1, 2) + x * dr(2, 0) + y * dr(2, 1));
  return (g - q * q.dot(g)) / norm;
}

}  // namespace

GaussianGrads renderBackward(const GaussianSet& set, const Pose& world_to_camera,
                             const Intrinsics& k, const RenderState& st, const Image& d_rgb,
                             const Image& d_depth, const RenderConfig& cfg) {
  const int w = st.width;
  const int h = st.height;
  const std::size_t npix = static_cast<std::size_t>(w) * h;
  if (d_rgb.width != w || d_rgb.height != h || d_rgb.channels != 3) {
    throw InputError("renderBackward: rgb gradient has the wrong shape");
  }
  const bool use_depth = !d_depth.empty();
  if (use_depth && (d_depth.width != w || d_depth.height != h || d_depth.channels != 1)) {
    throw InputError("renderBackward: depth gradient has the wrong shape");
  }

  // Features composited per pixel: r, g, b, z, 1. The depth image is
  // sum(z w) / sum(w), so its gradient splits onto the last two features.
  std::vector<double> feat_grad(npix * 5, 0.0);
  for (std::size_t pix = 0; pix < npix; ++pix) {
    double* g = &feat_grad[pix * 5];
    g[0] = d_rgb.data[pix * 3 + 0];
    g[1] = d_rgb.data[pix * 3 + 1];
    g[2] = d_rgb.data[pix * 3 + 2];
    const double a = st.weight_sum[pix];
    if (use_depth && a > 0.0) {
      const double gd = d_depth.data[pix];
      const double depth = st.depth_sum[pix] / a;
      g[3] = gd / a;
      g[4] = -gd * depth / a;
    }
  }

  std::vector<double> trans(st.final_transmittance);
  std::vector<double> suffix(npix * 5, 0.0);
  std::vector<SplatGrad> sg(st.splats.size());

  for (int pos = static_cast<int>(st.splats.size()) - 1; pos >= 0; --pos) {
    const Splat2D& s = st.splats[pos];
    SplatGrad& acc = sg[pos];
    const double f[5] = {s.color[0], s.color[1], s.color[2], s.view_z, 1.0};
    for (int y = s.y0; y <= s.y1; ++y) {
      for (int x = s.x0; x <= s.x1; ++x) {
        const std::size_t pix = static_cast<std::size_t>(y) * w + x;
        if (pos > st.last_contributor[pix]) continue;
        const PixelAlpha pa = pixelAlpha(s, x, y, cfg);
        if (pa.alpha == 0.0) continue;
        const double one_minus = 1.0 - pa.alpha;
        const double t_before = trans[pix] / one_minus;
        const double weight = pa.alpha * t_before;
        const double* g = &feat_grad[pix * 5];
        double* suf = &suffix[pix * 5];

        double d_alpha = 0.0;
        for (int c = 0; c < 5; ++c) d_alpha += g[c] * (f[c] * t_before - suf[c] / one_minus);
        acc.color += weight * Vec3(g[0], g[1], g[2]);
        acc.view_z += g[3] * weight;
        acc.touched = true;
        for (int c = 0; c < 5; ++c) suf[c] += f[c] * weight;
        trans[pix] = t_before;

        if (pa.clamped) continue;
        acc.opacity += d_alpha * pa.gauss;
        const double d_power = d_alpha * pa.alpha;
        const Vec2 delta(x - s.mean2d.x(), y - s.mean2d.y());
        acc.mean2d += d_power * (s.conic * delta);
        acc.conic += d_power * (-0.5 * delta * delta.transpose());
      }
    }
  }

  GaussianGrads out;
  out.resize(set.size());
  const Mat3& wr = world_to_camera.rotation();
  for (std::size_t pos = 0; pos < st.splats.size(); ++pos) {
    const Splat2D& s = st.splats[pos];
    const SplatGrad& acc = sg[pos];
    if (!acc.touched) continue;
    const int i = s.source;
    out.touched[i] = true;
    out.colors[i] = acc.color;
    out.opacity_logits[i] = acc.opacity * s.opacity * (1.0 - s.opacity);

    const double x = s.p_cam.x(), y = s.p_cam.y(), z = s.p_cam.z();
    const JacobianClamp jc = clampTangents(s.p_cam, k, cfg);
    const Eigen::Matrix<double, 2, 3> m = projectionJacobian(s.p_cam, k, cfg) * wr;
    const Mat3 rot = quaternionToMatrix(set.rotations[i]);
    const Vec3 scale = set.log_scales[i].array().exp();
    const Mat3 ms = rot * scale.asDiagonal();
    const Mat3 sigma = ms * ms.transpose();

    const Mat2 d_cov2d = -s.conic * acc.conic * s.conic;
    const Mat3 d_sigma = m.transpose() * d_cov2d * m;
    const Eigen::Matrix<double, 2, 3> d_m = 2.0 * d_cov2d * m * sigma;
    const Eigen::Matrix<double, 2, 3> d_j = d_m * wr.transpose();

    Vec3 dp = Vec3::Zero();
    const double z2 = z * z;
    const double z3 = z2 * z;
    dp.x() += acc.mean2d.x() * k.fx / z;
    dp.z() += -acc.mean2d.x() * k.fx * x / z2;
    dp.y() += acc.mean2d.y() * k.fy / z;
    dp.z() += -acc.mean2d.y() * k.fy * y / z2;
    dp.z() += d_j(0, 0) * (-k.fx / z2);
    dp.z() += d_j(1, 1) * (-k.fy / z2);
    // j02 = -fx tx / z with tx = x / z unless clamped.
    if (jc.x_free) {
      dp.x() += d_j(0, 2) * (-k.fx / z2);
      dp.z() += d_j(0, 2) * (2.0 * k.fx * x / z3);
    } else {
      dp.z() += d_j(0, 2) * (k.fx * jc.x / z2);
    }
    if (jc.y_free) {
      dp.y() += d_j(1, 2) * (-k.fy / z2);
      dp.z() += d_j(1, 2) * (2.0 * k.fy * y / z3);
    } else {
      dp.z() += d_j(1, 2) * (k.fy * jc.y / z2);
    }
    dp.z() += acc.view_z;
    out.means[i] = wr.transpose() * dp;

    const Mat3 d_ms = 2.0 * d_sigma * ms;
    Vec3 d_scale;
    for (int c = 0; c < 3; ++c) d_scale[c] = d_ms.col(c).dot(rot.col(c));
    out.log_scales[i] = d_scale.cwiseProduct(scale);
    const Mat3 d_rot = d_ms * scale.asDiagonal();
    out.rotations[i] = quaternionGrad(set.rotations[i], d_rot);
  }
  return out;
}

}  // namespace gsicp
