#include "gsicp/mapping.hpp"

#include <cmath>
#include <fstream>

#include "gsicp/errors.hpp"
#include "gsicp/ssim.hpp"

namespace gsicp {

std::vector<char> validDepthMask(const Image& gt_depth) {
  std::vector<char> mask(gt_depth.pixelCount(), 0);
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double d = gt_depth.data[i];
    mask[i] = std::isfinite(d) && d > 0.0;
  }
  return mask;
}

namespace {

inline double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

LossResult mapLoss(const RenderedFrame& rendered, const Image& gt_rgb, const Image& gt_depth,
                   const LossWeights& w, const std::vector<char>& depth_mask) {
  if (!rendered.rgb.sameShape(gt_rgb)) throw InputError("mapLoss: rgb shapes differ");
  if (!rendered.depth.sameShape(gt_depth)) throw InputError("mapLoss: depth shapes differ");
  if (depth_mask.size() != gt_depth.pixelCount()) throw InputError("mapLoss: mask size differs");

  LossResult r;
  r.d_rgb = Image(gt_rgb.width, gt_rgb.height, 3);
  r.d_depth = Image(gt_depth.width, gt_depth.height, 1);

  const double n_rgb = static_cast<double>(gt_rgb.data.size());
  double l1 = 0.0;
  for (std::size_t i = 0; i < gt_rgb.data.size(); ++i) {
    const double d = rendered.rgb.data[i] - gt_rgb.data[i];
    l1 += std::abs(d);
    r.d_rgb.data[i] = w.l1 * sign(d) / n_rgb;
  }
  r.l1 = l1 / n_rgb;

  if (w.dssim != 0.0) {
    Image g;
    const double s = ssimWithGrad(rendered.rgb, gt_rgb, &g);
    r.dssim = (1.0 - s) * 0.5;
    for (std::size_t i = 0; i < g.data.size(); ++i) r.d_rgb.data[i] -= 0.5 * w.dssim * g.data[i];
  } else {
    r.dssim = (1.0 - ssim(rendered.rgb, gt_rgb)) * 0.5;
  }

  std::size_t count = 0;
  for (char m : depth_mask) count += m ? 1 : 0;
  r.depth_mask_empty = count == 0;
  if (count > 0) {
    double sum = 0.0;
    for (std::size_t i = 0; i < depth_mask.size(); ++i) {
      if (!depth_mask[i]) continue;
      const double d = rendered.depth.data[i] - gt_depth.data[i];
      sum += std::abs(d);
      r.d_depth.data[i] = w.depth * sign(d) / static_cast<double>(count);
    }
    r.depth = sum / static_cast<double>(count);
  }
  r.loss = w.l1 * r.l1 + w.dssim * r.dssim + (count > 0 ? w.depth * r.depth : 0.0);
  return r;
}

const KeyframeRecord& pickTrainingKeyframe(std::span<const KeyframeRecord> keyframes,
                                           std::mt19937_64& rng) {
  if (keyframes.empty()) throw InputError("pickTrainingKeyframe: no keyframes");
  std::uniform_int_distribution<std::size_t> dist(0, keyframes.size() - 1);
  return keyframes[dist(rng)];
}

void OptimizerState::resize(std::size_t n) {
  m_means.resize(n, Vec3::Zero());
  v_means.resize(n, Vec3::Zero());
  m_rot.resize(n, Vec4::Zero());
  v_rot.resize(n, Vec4::Zero());
  m_scale.resize(n, Vec3::Zero());
  v_scale.resize(n, Vec3::Zero());
  m_color.resize(n, Vec3::Zero());
  v_color.resize(n, Vec3::Zero());
  m_opacity.resize(n, 0.0);
  v_opacity.resize(n, 0.0);
  steps.resize(n, 0);
}

namespace {

template <typename T>
void keepOnly(std::vector<T>& v, const std::vector<bool>& keep) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (keep[i]) v[out++] = v[i];
  }
  v.resize(out);
}

template <typename V>
void adamUpdate(V& param, V& m, V& v, const V& g, double lr, double bias1, double bias2,
                const AdamConfig& a) {
  m = a.beta1 * m + (1.0 - a.beta1) * g;
  v = a.beta2 * v + (1.0 - a.beta2) * g.cwiseProduct(g);
  const V m_hat = m / bias1;
  const V v_hat = v / bias2;
  param -= lr * m_hat.cwiseQuotient((v_hat.array().sqrt() + a.eps).matrix());
}

void adamUpdate(double& param, double& m, double& v, double g, double lr, double bias1,
                double bias2, const AdamConfig& a) {
  m = a.beta1 * m + (1.0 - a.beta1) * g;
  v = a.beta2 * v + (1.0 - a.beta2) * g * g;
  param -= lr * (m / bias1) / (std::sqrt(v / bias2) + a.eps);
}

bool gradsFinite(const GaussianGrads& g) {
  for (std::size_t i = 0; i < g.touched.size(); ++i) {
    if (!g.touched[i]) continue;
    if (!g.means[i].allFinite() || !g.rotations[i].allFinite() || !g.log_scales[i].allFinite() ||
        !g.colors[i].allFinite() || !std::isfinite(g.opacity_logits[i])) {
      return false;
    }
  }
  return true;
}

}  // namespace

void OptimizerState::compact(const std::vector<bool>& keep) {
  keepOnly(m_means, keep);
  keepOnly(v_means, keep);
  keepOnly(m_rot, keep);
  keepOnly(v_rot, keep);
  keepOnly(m_scale, keep);
  keepOnly(v_scale, keep);
  keepOnly(m_color, keep);
  keepOnly(v_color, keep);
  keepOnly(m_opacity, keep);
  keepOnly(v_opacity, keep);
  keepOnly(steps, keep);
}

TrainingChoice parseTrainingChoice(const std::string& s) {
  if (s == "random") return TrainingChoice::Random;
  if (s == "recent") return TrainingChoice::Recent;
  throw InputError("unknown training keyframe choice '" + s + "'");
}

Mapper::Mapper(GaussianMap& map, MappingConfig cfg, InsertConfig insert, std::uint64_t seed)
    : map_(map), cfg_(std::move(cfg)), insert_(insert), rng_(seed) {}

int Mapper::consume(KeyframeMessage msg) {
  const bool target = msg.record.kind == KeyframeKind::Tracking;
  const int inserted = map_.insertKeyframe(msg.camera_cloud, msg.regularized,
                                           msg.record.camera_to_world, insert_, target);
  opt_.resize(map_.size());
  keyframes_.push_back(std::move(msg.record));
  return inserted;
}

StepStats Mapper::optimizeStep(const KeyframeRecord& kf) {
  const Pose w2c = kf.camera_to_world.inverse();
  const std::vector<char> mask = validDepthMask(kf.depth);
  StepStats stats;
  map_.modify([&](GaussianSet& p) {
    opt_.resize(p.size());
    RenderState state;
    const RenderedFrame frame = render(p, w2c, kf.intrinsics, cfg_.render, &state);
    const LossResult loss = mapLoss(frame, kf.color, kf.depth, cfg_.weights, mask);
    stats.loss = loss.loss;
    if (!std::isfinite(loss.loss)) {
      stats.rejected = true;
      return;
    }
    const GaussianGrads g =
        renderBackward(p, w2c, kf.intrinsics, state, loss.d_rgb, loss.d_depth, cfg_.render);
    if (!gradsFinite(g)) {
      stats.rejected = true;
      return;
    }
    const AdamConfig& a = cfg_.adam;
    const double lr_means = cfg_.lr.means * cfg_.scene_extent;
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (!g.touched[i]) continue;
      const int t = ++opt_.steps[i];
      const double bias1 = 1.0 - std::pow(a.beta1, t);
      const double bias2 = 1.0 - std::pow(a.beta2, t);
      adamUpdate(p.means[i], opt_.m_means[i], opt_.v_means[i], g.means[i], lr_means, bias1, bias2,
                 a);
      adamUpdate(p.rotations[i], opt_.m_rot[i], opt_.v_rot[i], g.rotations[i], cfg_.lr.rotations,
                 bias1, bias2, a);
      p.rotations[i].normalize();
      adamUpdate(p.log_scales[i], opt_.m_scale[i], opt_.v_scale[i], g.log_scales[i],
                 cfg_.lr.log_scales, bias1, bias2, a);
      adamUpdate(p.colors[i], opt_.m_color[i], opt_.v_color[i], g.colors[i], cfg_.lr.colors,
                 bias1, bias2, a);
      adamUpdate(p.opacity_logits[i], opt_.m_opacity[i], opt_.v_opacity[i], g.opacity_logits[i],
                 cfg_.lr.opacity_logits, bias1, bias2, a);
    }
  });
  if (stats.rejected) ++rejected_;
  return stats;
}

int Mapper::iterate(int n, const std::atomic<bool>* stop) {
  if (keyframes_.empty()) return 0;
  int done = 0;
  for (; done < n; ++done) {
    if (stop && stop->load()) break;
    const KeyframeRecord& kf = cfg_.training == TrainingChoice::Random
                                   ? pickTrainingKeyframe(keyframes_, rng_)
                                   : keyframes_.back();
    const StepStats s = optimizeStep(kf);
    ++iterations_;
    if (cfg_.prune_enabled && iterations_ >= cfg_.prune_warmup &&
        iterations_ % cfg_.prune_every == 0) {
      const std::vector<bool> keep = map_.prune(cfg_.prune);
      if (!keep.empty()) opt_.compact(keep);
    }
    history_.push_back({iterations_, s.loss, map_.size()});
  }
  return done;
}

void Mapper::writeLossCsv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path + " for writing");
  out << "iteration,loss,primitives\n";
  for (const auto& s : history_) out << s.iteration << ',' << s.loss << ',' << s.primitives << '\n';
}

}  // namespace gsicp
