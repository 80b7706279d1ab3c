#include "gsicp/tracking.hpp"

namespace gsicp {

std::string toString(KeyframeKind k) {
  switch (k) {
    case KeyframeKind::None:
      return "none";
    case KeyframeKind::Tracking:
      return "tracking";
    case KeyframeKind::MappingOnly:
      return "mapping_only";
  }
  return "?";
}

TrackResult trackFrame(const GaussianView& source, const MapSnapshot& map, const Pose& prior,
                       const TrackingConfig& cfg) {
  TrackResult out;
  if (map.empty()) throw InputError("trackFrame: empty map; insert the first frame instead");
  try {
    AlignResult r = align(source, map.index, map.view(), prior, cfg.gicp);
    out.pose = r.pose;
    out.iterations = r.iterations;
    out.corr_ratio = static_cast<double>(r.report.countWithin(cfg.corrThreshold())) /
                     static_cast<double>(source.size());
    out.report = std::move(r.report);
  } catch (const TrackingLost&) {
    out.pose = prior;
    out.lost = true;
    out.corr_ratio = 0.0;
  }
  return out;
}

KeyframeKind selectKeyframe(double corr_ratio, int frames_since_tracking_kf, int frame_index,
                            const TrackingConfig& cfg) {
  if (frame_index == 0) return KeyframeKind::Tracking;
  if (corr_ratio < cfg.kf_ratio_threshold ||
      (cfg.forced_kf_interval > 0 && frames_since_tracking_kf >= cfg.forced_kf_interval)) {
    return KeyframeKind::Tracking;
  }
  if (cfg.mapping_only_interval > 0 && frame_index % cfg.mapping_only_interval == 0) {
    return cfg.promote_mapping_only ? KeyframeKind::Tracking : KeyframeKind::MappingOnly;
  }
  return KeyframeKind::None;
}

Pose constantVelocityPrior(const std::vector<Pose>& history) {
  if (history.empty()) return Pose::identity();
  if (history.size() == 1) return history.back();
  const Pose& last = history[history.size() - 1];
  const Pose& prev = history[history.size() - 2];
  Pose p = last * (prev.inverse() * last);
  p.normalize();
  return p;
}

}  // namespace gsicp
