#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gsicp/gaussian_map.hpp"
#include "gsicp/image.hpp"
#include "gsicp/render.hpp"
#include "gsicp/se3.hpp"
#include "gsicp/tracking.hpp"

namespace gsicp {

struct LossWeights {
  double l1 = 0.8;
  double dssim = 0.2;
  double depth = 0.5;
};

struct LossResult {
  double loss = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double depth = 0.0;
  /// No valid ground-truth depth; the depth term was dropped.
  bool depth_mask_empty = false;
  Image d_rgb;
  Image d_depth;
};

/// Pixels with positive, finite ground-truth depth.
std::vector<char> validDepthMask(const Image& gt_depth);

/// l1 * mean|I - I_gt| + dssim * (1 - ssim) / 2 + depth * mean_mask |D - D_gt|,
/// with gradients on the rendered rgb and depth.
LossResult mapLoss(const RenderedFrame& rendered, const Image& gt_rgb, const Image& gt_depth,
                   const LossWeights& w, const std::vector<char>& depth_mask);

/// Training view: a keyframe image pair at render resolution and its fixed pose.
struct KeyframeRecord {
  int frame_index = 0;
  double timestamp = 0.0;
  KeyframeKind kind = KeyframeKind::Tracking;
  Pose camera_to_world;
  Intrinsics intrinsics;  // render resolution
  Image color;
  Image depth;
};

/// Uniform draw over all keyframes. Throws InputError on an empty list.
const KeyframeRecord& pickTrainingKeyframe(std::span<const KeyframeRecord> keyframes,
                                           std::mt19937_64& rng);

struct LearningRates {
  double means = 2e-4;  // multiplied by the scene extent
  double rotations = 1e-3;
  double log_scales = 5e-3;
  double colors = 2.5e-3;
  double opacity_logits = 5e-2;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-15;
};

/// Adam moments per primitive. New primitives start at zero moments and
/// their own step count.
struct OptimizerState {
  std::vector<Vec3> m_means, v_means;
  std::vector<Vec4> m_rot, v_rot;
  std::vector<Vec3> m_scale, v_scale;
  std::vector<Vec3> m_color, v_color;
  std::vector<double> m_opacity, v_opacity;
  std::vector<int> steps;

  std::size_t size() const { return steps.size(); }
  void resize(std::size_t n);
  void compact(const std::vector<bool>& keep);
};

enum class TrainingChoice { Random, Recent };
TrainingChoice parseTrainingChoice(const std::string& s);

struct MappingConfig {
  LossWeights weights;
  LearningRates lr;
  AdamConfig adam;
  double scene_extent = 1.0;
  TrainingChoice training = TrainingChoice::Random;
  bool prune_enabled = true;
  int prune_every = 50;
  int prune_warmup = 100;
  PruneConfig prune;
  RenderConfig render;
};

/// Everything the tracker hands to the mapping lane for one keyframe.
struct KeyframeMessage {
  KeyframeRecord record;
  PointCloud camera_cloud;
  std::vector<CovDecomposition> regularized;
};

struct StepStats {
  double loss = 0.0;
  bool rejected = false;
};

/// The mapping lane: the sole writer of map parameters and optimizer state.
class Mapper {
 public:
  Mapper(GaussianMap& map, MappingConfig cfg, InsertConfig insert, std::uint64_t seed);

  /// Inserts the keyframe's Gaussians and adds it to the training set.
  int consume(KeyframeMessage msg);

  /// One render / loss / backward / Adam update at the keyframe's pose.
  StepStats optimizeStep(const KeyframeRecord& keyframe);

  /// n iterations of pick-keyframe + optimizeStep with the pruning schedule.
  /// Stops early when `stop` becomes true. Returns iterations run.
  int iterate(int n, const std::atomic<bool>* stop = nullptr);

  const std::vector<KeyframeRecord>& keyframes() const { return keyframes_; }
  std::int64_t iterations() const { return iterations_; }
  const OptimizerState& optimizerState() const { return opt_; }
  int rejectedSteps() const { return rejected_; }

  struct LossSample {
    std::int64_t iteration;
    double loss;
    std::size_t primitives;
  };
  const std::vector<LossSample>& lossHistory() const { return history_; }
  void writeLossCsv(const std::string& path) const;

 private:
  GaussianMap& map_;
  MappingConfig cfg_;
  InsertConfig insert_;
  std::mt19937_64 rng_;
  OptimizerState opt_;
  std::vector<KeyframeRecord> keyframes_;
  std::int64_t iterations_ = 0;
  int rejected_ = 0;
  std::vector<LossSample> history_;
};

}  // namespace gsicp
