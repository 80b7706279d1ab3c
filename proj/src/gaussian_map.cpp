#include "gsicp/gaussian_map.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>

#include "gsicp/errors.hpp"

namespace gsicp {

Mat3 quaternionToMatrix(const Vec4& q_in) {
  const Vec4 q = q_in / q_in.norm();
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Mat3 r;
  r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
      2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
      2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
  return r;
}

Vec4 matrixToQuaternion(const Mat3& r) {
  Quat q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 covarianceFromParams(const Vec4& q, const Vec3& log_scale) {
  const Mat3 r = quaternionToMatrix(q);
  const Vec3 s = log_scale.array().exp();
  const Mat3 m = r * s.asDiagonal();
  return m * m.transpose();
}

void GaussianSet::reserve(std::size_t n) {
  means.reserve(n);
  rotations.reserve(n);
  log_scales.reserve(n);
  colors.reserve(n);
  opacity_logits.reserve(n);
}

void GaussianSet::push_back(const Vec3& mean, const Vec4& rotation, const Vec3& log_scale,
                            const Vec3& color, double opacity_logit) {
  means.push_back(mean);
  rotations.push_back(rotation);
  log_scales.push_back(log_scale);
  colors.push_back(color);
  opacity_logits.push_back(opacity_logit);
}

namespace {

template <typename T>
void compactVector(std::vector<T>& v, const std::vector<bool>& keep) {
  std::size_t out = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (keep[i]) v[out++] = v[i];
  }
  v.resize(out);
}

}  // namespace

void GaussianSet::compact(const std::vector<bool>& keep) {
  compactVector(means, keep);
  compactVector(rotations, keep);
  compactVector(log_scales, keep);
  compactVector(colors, keep);
  compactVector(opacity_logits, keep);
}

bool GaussianSet::consistent() const {
  const std::size_t n = means.size();
  return rotations.size() == n && log_scales.size() == n && colors.size() == n &&
         opacity_logits.size() == n;
}

ScaleInit parseScaleInit(const std::string& s) {
  if (s == "aligned") return ScaleInit::Aligned;
  if (s == "constant") return ScaleInit::Constant;
  if (s == "naive") return ScaleInit::Naive;
  throw InputError("unknown scale_init '" + s + "'");
}

std::string toString(ScaleInit s) {
  switch (s) {
    case ScaleInit::Aligned:
      return "aligned";
    case ScaleInit::Constant:
      return "constant";
    case ScaleInit::Naive:
      return "naive";
  }
  return "?";
}

CovDecomposition scaleAlign(const CovDecomposition& d, double z, double p) {
  if (!(z > 0.0)) throw InputError("scaleAlign: depth must be positive");
  CovDecomposition out = d;
  out.scales = d.scales * std::pow(z, -p);
  return out;
}

std::vector<bool> overlapFilter(std::span<const Vec3> world_means, const MapSnapshot& snapshot,
                                double dist_threshold) {
  std::vector<bool> mask(world_means.size(), true);
  if (snapshot.empty()) return mask;
  const double t2 = dist_threshold * dist_threshold;
  for (std::size_t i = 0; i < world_means.size(); ++i) {
    mask[i] = snapshot.index.nearest(world_means[i]).dist2 > t2;
  }
  return mask;
}

namespace {

// Regularised covariance straight from rotation + scale parameters, no eigensolve.
Mat3 regularizeParams(const Vec4& q, const Vec3& log_scale, Regularization mode,
                      double plane_eps, const Mat3& raw) {
  if (mode == Regularization::None) return raw;
  CovDecomposition d;
  d.axes = quaternionToMatrix(q);
  const Vec3 s = log_scale.array().exp();
  std::array<int, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) { return s[a] > s[b]; });
  Mat3 axes;
  for (int i = 0; i < 3; ++i) {
    axes.col(i) = d.axes.col(order[i]);
    d.scales[i] = s[order[i]];
  }
  d.axes = axes;
  return regularizeDecomposition(d, mode, plane_eps).covariance;
}

}  // namespace

int GaussianMap::insertKeyframe(const PointCloud& camera_cloud,
                                std::span<const CovDecomposition> regularized,
                                const Pose& camera_to_world, const InsertConfig& cfg,
                                bool tracking_target) {
  if (regularized.size() != camera_cloud.size()) {
    throw InputError("insertKeyframe: decomposition count does not match cloud");
  }
  std::vector<Vec3> world(camera_cloud.size());
  for (std::size_t i = 0; i < world.size(); ++i) world[i] = camera_to_world * camera_cloud.points[i];

  std::vector<double> naive_scale;
  if (cfg.scale_init == ScaleInit::Naive) {
    const KdTree local(camera_cloud.points);
    naive_scale.resize(camera_cloud.size());
    for (std::size_t i = 0; i < camera_cloud.size(); ++i) {
      const auto nn = local.knn(camera_cloud.points[i], 4);
      double sum = 0.0;
      int n = 0;
      for (const auto& e : nn) {
        if (e.index == static_cast<int>(i)) continue;
        sum += e.dist2;
        ++n;
      }
      naive_scale[i] = n > 0 ? std::sqrt(sum / n) : cfg.min_scale;
    }
  }

  // Constant mode divides every point by one frame-wide factor, the mean of z^p.
  double constant_divisor = 1.0;
  if (cfg.scale_init == ScaleInit::Constant && !camera_cloud.points.empty()) {
    double sum = 0.0;
    for (const Vec3& p : camera_cloud.points) sum += std::pow(p.z(), cfg.scale_exponent);
    constant_divisor = sum / static_cast<double>(camera_cloud.size());
  }

  const Scope scope = tracking_target ? Scope::TrackingTargets : Scope::All;
  const auto snap = snapshot(scope, Regularization::None);
  const std::vector<bool> mask = overlapFilter(world, *snap, cfg.overlap_dist);

  const double lo = std::log(cfg.min_scale);
  const double hi = std::log(cfg.max_scale);
  const double init_logit = logit(cfg.init_opacity);
  const Mat3& rwc = camera_to_world.rotation();

  std::lock_guard lock(mutex_);
  int inserted = 0;
  for (std::size_t i = 0; i < world.size(); ++i) {
    if (!mask[i]) continue;
    Vec4 q;
    Vec3 scales;
    switch (cfg.scale_init) {
      case ScaleInit::Aligned: {
        const CovDecomposition a = scaleAlign(regularized[i], camera_cloud.points[i].z(),
                                              cfg.scale_exponent);
        q = matrixToQuaternion(rwc * a.axes);
        scales = cfg.scale_base * a.scales;
        break;
      }
      case ScaleInit::Constant:
        q = matrixToQuaternion(rwc * regularized[i].axes);
        scales = cfg.scale_base * regularized[i].scales / constant_divisor;
        break;
      case ScaleInit::Naive:
        q = Vec4(1.0, 0.0, 0.0, 0.0);
        scales = Vec3::Constant(naive_scale[i]);
        break;
    }
    if (cfg.max_anisotropy > 0.0) {
      scales = scales.cwiseMax(scales.maxCoeff() / cfg.max_anisotropy);
    }
    const Vec3 ls = scales.array().log().cwiseMax(lo).cwiseMin(hi);
    params_.push_back(world[i], q, ls, camera_cloud.colors[i], init_logit);
    tracking_target_.push_back(tracking_target);
    ++inserted;
  }
  ++version_;
  return inserted;
}

Anisotropy parseAnisotropy(const std::string& s) {
  if (s == "max_mid") return Anisotropy::MaxOverMid;
  if (s == "max_min") return Anisotropy::MaxOverMin;
  throw InputError("unknown anisotropy measure '" + s + "' (expected max_mid or max_min)");
}

std::string toString(Anisotropy a) { return a == Anisotropy::MaxOverMid ? "max_mid" : "max_min"; }

double anisotropyRatio(const Vec3& scales, Anisotropy measure) {
  Vec3 s = scales;
  std::sort(s.data(), s.data() + 3);
  return s[2] / (measure == Anisotropy::MaxOverMid ? s[1] : s[0]);
}

std::vector<bool> GaussianMap::prune(const PruneConfig& cfg, int* removed) {
  std::lock_guard lock(mutex_);
  const std::size_t n = params_.size();
  std::vector<bool> keep(n, true);
  int count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 s = params_.log_scales[i].array().exp();
    const double smax = s.maxCoeff();
    const double ratio = anisotropyRatio(s, cfg.anisotropy);
    if (sigmoid(params_.opacity_logits[i]) < cfg.min_opacity || ratio > cfg.max_anisotropy ||
        smax > cfg.max_scale) {
      keep[i] = false;
      ++count;
    }
  }
  if (removed) *removed = count;
  if (count == 0) return {};
  params_.compact(keep);
  std::size_t out = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) tracking_target_[out++] = tracking_target_[i];
  }
  tracking_target_.resize(out);
  ++version_;
  return keep;
}

std::shared_ptr<const MapSnapshot> GaussianMap::buildSnapshot(Scope scope, Regularization mode,
                                                              double plane_eps) const {
  auto snap = std::make_shared<MapSnapshot>();
  snap->version = version_;
  snap->mode = mode;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (scope == Scope::TrackingTargets && !tracking_target_[i]) continue;
    const Mat3 raw = covarianceFromParams(params_.rotations[i], params_.log_scales[i]);
    snap->ids.push_back(static_cast<int>(i));
    snap->means.push_back(params_.means[i]);
    snap->covariances.push_back(raw);
    snap->regularized.push_back(
        regularizeParams(params_.rotations[i], params_.log_scales[i], mode, plane_eps, raw));
  }
  snap->index = KdTree(snap->means);
  return snap;
}

std::shared_ptr<const MapSnapshot> GaussianMap::snapshot(Scope scope, Regularization mode,
                                                         double plane_eps) {
  std::lock_guard lock(mutex_);
  for (const auto& e : cache_) {
    if (e.snap->version == version_ && e.scope == scope && e.mode == mode &&
        e.plane_eps == plane_eps) {
      return e.snap;
    }
  }
  std::erase_if(cache_, [&](const CacheEntry& e) { return e.snap->version != version_; });
  auto snap = buildSnapshot(scope, mode, plane_eps);
  cache_.push_back({scope, mode, plane_eps, snap});
  return snap;
}

std::uint64_t GaussianMap::version() const {
  std::lock_guard lock(mutex_);
  return version_;
}

std::size_t GaussianMap::size() const {
  std::lock_guard lock(mutex_);
  return params_.size();
}

std::size_t GaussianMap::targetCount() const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(
      std::count(tracking_target_.begin(), tracking_target_.end(), true));
}

GaussianSet GaussianMap::params() const {
  std::lock_guard lock(mutex_);
  return params_;
}

std::vector<bool> GaussianMap::trackingFlags() const {
  std::lock_guard lock(mutex_);
  return tracking_target_;
}

void GaussianMap::reset(GaussianSet params, std::vector<bool> tracking_flags,
                        std::uint64_t version) {
  if (!params.consistent() || tracking_flags.size() != params.size()) {
    throw InputError("GaussianMap::reset: inconsistent array lengths");
  }
  std::lock_guard lock(mutex_);
  params_ = std::move(params);
  tracking_target_ = std::move(tracking_flags);
  version_ = version;
  cache_.clear();
}

namespace {

constexpr char kMagic[8] = {'G', 'S', 'I', 'C', 'P', 'M', 'A', 'P'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void writePod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T readPod(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("checkpoint: truncated file");
  return v;
}

template <typename V>
void writeVectors(std::ofstream& out, const std::vector<V>& vs) {
  for (const auto& v : vs) {
    for (int k = 0; k < V::RowsAtCompileTime; ++k) writePod(out, v[k]);
  }
}

template <typename V>
void readVectors(std::ifstream& in, std::vector<V>& vs, std::size_t n) {
  vs.resize(n);
  for (auto& v : vs) {
    for (int k = 0; k < V::RowsAtCompileTime; ++k) v[k] = readPod<double>(in);
  }
}

}  // namespace

void writeCheckpoint(const std::filesystem::path& path, const GaussianMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("checkpoint: cannot open " + path.string() + " for writing");
  const GaussianSet p = map.params();
  const std::vector<bool> flags = map.trackingFlags();
  out.write(kMagic, sizeof(kMagic));
  writePod(out, kFormatVersion);
  writePod(out, static_cast<std::uint64_t>(map.version()));
  writePod(out, static_cast<std::uint64_t>(p.size()));
  writeVectors(out, p.means);
  writeVectors(out, p.rotations);
  writeVectors(out, p.log_scales);
  writeVectors(out, p.colors);
  for (double o : p.opacity_logits) writePod(out, o);
  for (bool f : flags) writePod(out, static_cast<std::uint8_t>(f ? 1 : 0));
  if (!out) throw FormatError("checkpoint: write failed for " + path.string());
}

void readCheckpoint(const std::filesystem::path& path, GaussianMap& map) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint: cannot open " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw FormatError("checkpoint: bad magic in " + path.string());
  }
  const auto fmt = readPod<std::uint32_t>(in);
  if (fmt != kFormatVersion) {
    throw FormatError("checkpoint: unsupported format version " + std::to_string(fmt));
  }
  const auto version = readPod<std::uint64_t>(in);
  const auto n = static_cast<std::size_t>(readPod<std::uint64_t>(in));
  GaussianSet p;
  readVectors(in, p.means, n);
  readVectors(in, p.rotations, n);
  readVectors(in, p.log_scales, n);
  readVectors(in, p.colors, n);
  p.opacity_logits.resize(n);
  for (double& o : p.opacity_logits) o = readPod<double>(in);
  std::vector<bool> flags(n);
  for (std::size_t i = 0; i < n; ++i) flags[i] = readPod<std::uint8_t>(in) != 0;
  map.reset(std::move(p), std::move(flags), version);
}

}  // namespace gsicp
