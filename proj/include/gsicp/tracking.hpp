#pragma once

#include <string>
#include <vector>

#include "gsicp/gaussian_map.hpp"
#include "gsicp/gicp.hpp"
#include "gsicp/se3.hpp"

namespace gsicp {

enum class KeyframeKind { None, Tracking, MappingOnly };

std::string toString(KeyframeKind k);

struct TrackingConfig {
  GicpConfig gicp;
  /// Distance below which a pair counts towards the correspondence ratio;
  /// negative means "use gicp.max_corr_dist".
  double corr_dist_threshold = -1.0;
  double kf_ratio_threshold = 0.9;
  /// A tracking keyframe is forced after this many frames without one.
  int forced_kf_interval = 30;
  /// Every n-th frame becomes a mapping-only keyframe; 0 disables.
  int mapping_only_interval = 10;
  /// Promote mapping-only frames to full tracking keyframes (ablation).
  bool promote_mapping_only = false;

  double corrThreshold() const {
    return corr_dist_threshold > 0.0 ? corr_dist_threshold : gicp.max_corr_dist;
  }
};

struct TrackResult {
  Pose pose;  // camera-to-world
  CorrespondenceReport report;
  double corr_ratio = 0.0;
  bool lost = false;
  int iterations = 0;
};

/// Aligns camera-frame source Gaussians (covariances already regularised) to
/// the snapshot's regularised targets, starting from `prior`. A lost track
/// returns the prior with lost = true.
TrackResult trackFrame(const GaussianView& source, const MapSnapshot& map, const Pose& prior,
                       const TrackingConfig& cfg);

/// Keyframe policy. Stateless: the caller keeps the counters.
KeyframeKind selectKeyframe(double corr_ratio, int frames_since_tracking_kf, int frame_index,
                            const TrackingConfig& cfg);

/// Constant-velocity prediction from the last two poses; repeats the last pose
/// when only one exists and returns identity with none.
Pose constantVelocityPrior(const std::vector<Pose>& history);

}  // namespace gsicp
