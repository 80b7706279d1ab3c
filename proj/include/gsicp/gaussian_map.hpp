#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "gsicp/cloud.hpp"
#include "gsicp/gicp.hpp"
#include "gsicp/kdtree.hpp"
#include "gsicp/se3.hpp"
#include "gsicp/types.hpp"

namespace gsicp {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Rotation matrix of a (w, x, y, z) quaternion; the quaternion is normalised first.
Mat3 quaternionToMatrix(const Vec4& q);
Vec4 matrixToQuaternion(const Mat3& r);

/// R diag(exp(log_scale))^2 R^T. The renderer and the snapshot both go through
/// this function, so tracking targets and rendered primitives never disagree.
Mat3 covarianceFromParams(const Vec4& q, const Vec3& log_scale);

/// Structure-of-arrays Gaussian parameters.
struct GaussianSet {
  std::vector<Vec3> means;
  std::vector<Vec4> rotations;  // (w, x, y, z)
  std::vector<Vec3> log_scales;
  std::vector<Vec3> colors;
  std::vector<double> opacity_logits;

  std::size_t size() const { return means.size(); }
  bool empty() const { return means.empty(); }
  void reserve(std::size_t n);
  void push_back(const Vec3& mean, const Vec4& rotation, const Vec3& log_scale,
                 const Vec3& color, double opacity_logit);
  /// Keeps entries with keep[i] == true, preserving order.
  void compact(const std::vector<bool>& keep);
  bool consistent() const;
};

enum class ScaleInit {
  Aligned,   // regularised G-ICP scales divided by z^p
  Constant,  // regularised G-ICP scales divided by the frame mean of z^p
  Naive,     // isotropic 3-NN distance, identity rotation; ignores the G-ICP covariances
};

ScaleInit parseScaleInit(const std::string& s);
std::string toString(ScaleInit s);

struct InsertConfig {
  double init_opacity = 0.7;
  double overlap_dist = 0.5;
  double scale_exponent = 1.5;
  /// Metres per unit of ellipse-regularised scale at z = 1.
  double scale_base = 0.3;
  ScaleInit scale_init = ScaleInit::Aligned;
  double min_scale = 1e-6;
  double max_scale = 10.0;
  /// Smallest scale is raised to max / max_anisotropy; <= 0 disables.
  double max_anisotropy = 50.0;
};

enum class Anisotropy {
  MaxOverMid,  // needle-like primitives only; flat surface discs survive
  MaxOverMin,
};

Anisotropy parseAnisotropy(const std::string& s);
std::string toString(Anisotropy a);

struct PruneConfig {
  double min_opacity = 0.05;
  double max_anisotropy = 60.0;
  Anisotropy anisotropy = Anisotropy::MaxOverMid;
  double max_scale = 1.0;
};

/// max / middle or max / min of the three scales.
double anisotropyRatio(const Vec3& scales, Anisotropy measure);

/// Scales multiplied by z^-p; axes untouched. Throws InputError for z <= 0.
CovDecomposition scaleAlign(const CovDecomposition& d, double z, double p);

/// Immutable view of the map served to the tracker.
struct MapSnapshot {
  std::uint64_t version = 0;
  std::vector<int> ids;  // parameter index of each entry at snapshot time
  std::vector<Vec3> means;
  std::vector<Mat3> covariances;   // covarianceFromParams of each entry
  std::vector<Mat3> regularized;   // covariances regularised with `mode`
  Regularization mode = Regularization::Ellipse;
  KdTree index;

  bool empty() const { return means.empty(); }
  std::size_t size() const { return means.size(); }
  GaussianView view() const { return {means, regularized}; }
};

/// mask[i] is true when no snapshot mean lies within dist_threshold of means[i].
std::vector<bool> overlapFilter(std::span<const Vec3> world_means, const MapSnapshot& snapshot,
                                double dist_threshold);

/// The single Gaussian map shared by tracking and mapping.
///
/// One writer (the mapping lane) mutates the parameters; any thread may take
/// snapshots. Every mutation bumps the version.
class GaussianMap {
 public:
  enum class Scope { All, TrackingTargets };

  GaussianMap() = default;
  GaussianMap(const GaussianMap&) = delete;
  GaussianMap& operator=(const GaussianMap&) = delete;

  /// Inserts the non-overlapping points of a keyframe. `regularized` holds the
  /// ellipse-regularised decomposition of each camera-frame point. Tracking
  /// keyframes are tested for overlap against tracking targets only, mapping
  /// keyframes against the whole map. Returns the number inserted.
  int insertKeyframe(const PointCloud& camera_cloud, std::span<const CovDecomposition> regularized,
                     const Pose& camera_to_world, const InsertConfig& cfg, bool tracking_target);

  /// Removes low-opacity, over-elongated and oversized primitives. Returns the
  /// keep mask (empty when nothing was removed).
  std::vector<bool> prune(const PruneConfig& cfg, int* removed = nullptr);

  /// Cached per (version, scope, mode).
  std::shared_ptr<const MapSnapshot> snapshot(Scope scope = Scope::All,
                                              Regularization mode = Regularization::Ellipse,
                                              double plane_eps = 1e-3);

  std::uint64_t version() const;
  std::size_t size() const;
  std::size_t targetCount() const;

  /// Runs `fn(GaussianSet&)` under the writer lock and bumps the version.
  template <typename Fn>
  auto modify(Fn&& fn) {
    std::lock_guard lock(mutex_);
    ++version_;
    return fn(params_);
  }

  /// Runs `fn(const GaussianSet&)` under the lock.
  template <typename Fn>
  auto read(Fn&& fn) const {
    std::lock_guard lock(mutex_);
    return fn(static_cast<const GaussianSet&>(params_));
  }

  /// Copy of the parameters.
  GaussianSet params() const;
  std::vector<bool> trackingFlags() const;

  /// Replaces the whole store (checkpoint restore).
  void reset(GaussianSet params, std::vector<bool> tracking_flags, std::uint64_t version);

 private:
  std::shared_ptr<const MapSnapshot> buildSnapshot(Scope scope, Regularization mode,
                                                   double plane_eps) const;

  mutable std::mutex mutex_;
  GaussianSet params_;
  std::vector<bool> tracking_target_;
  std::uint64_t version_ = 0;

  struct CacheEntry {
    Scope scope;
    Regularization mode;
    double plane_eps;
    std::shared_ptr<const MapSnapshot> snap;
  };
  std::vector<CacheEntry> cache_;
};

/// Binary checkpoint of the five parameter arrays, tracking flags and version.
/// Layout is documented in docs/checkpoint_format.md.
void writeCheckpoint(const std::filesystem::path& path, const GaussianMap& map);
void readCheckpoint(const std::filesystem::path& path, GaussianMap& map);

}  // namespace gsicp
