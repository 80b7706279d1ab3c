#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "gsicp/config.hpp"
#include "gsicp/dataset.hpp"
#include "gsicp/gaussian_map.hpp"
#include "gsicp/trajectory.hpp"

namespace gsicp {

struct KeyframeEntry {
  int frame_index = 0;
  KeyframeKind kind = KeyframeKind::None;
  int inserted = 0;
};

struct ViewMetrics {
  int frame_index = 0;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct SlamReport {
  Trajectory trajectory;
  /// NaN when the dataset has no ground truth.
  double ate_rmse_cm = std::numeric_limits<double>::quiet_NaN();
  int ate_matched = 0;
  std::vector<ViewMetrics> heldout;
  double mean_psnr = std::numeric_limits<double>::quiet_NaN();
  double mean_ssim = std::numeric_limits<double>::quiet_NaN();
  /// Processed frames over wall-clock seconds of the whole system.
  double fps = 0.0;
  double wall_seconds = 0.0;
  std::vector<std::size_t> primitive_history;  // map size after each frame
  std::vector<KeyframeEntry> keyframes;
  std::int64_t mapping_iterations = 0;
  int rejected_steps = 0;
  int lost_frames = 0;
  bool aborted = false;
  std::string abort_reason;
  double scene_extent = 0.0;
  GaussianSet final_map;
};

/// Opens the dataset named by the config (synthetic scenes are generated).
DatasetStream openDataset(const SlamConfig& cfg);

/// Runs tracking and mapping over the stream. When out_dir is non-empty,
/// writes traj.txt, metrics.json, map.bin, loss.csv and config.json there.
SlamReport runSlam(const SlamConfig& cfg, const DatasetStream& stream,
                   const std::filesystem::path& out_dir = {});

/// Frames used as held-out views: index % every == offset and not a keyframe.
std::vector<int> heldoutFrames(std::size_t frame_count, const EvalConfig& eval,
                               const std::vector<int>& keyframe_indices);

/// Renders the map at the trajectory poses of the given frames and scores
/// them against the dataset images at render resolution.
std::vector<ViewMetrics> evaluateViews(const GaussianSet& map, const Trajectory& trajectory,
                                       const DatasetStream& stream, const std::vector<int>& frames,
                                       int downsample, const RenderConfig& render_cfg);

std::string reportToJson(const SlamReport& report);

}  // namespace gsicp
