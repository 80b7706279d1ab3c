#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "gsicp/image.hpp"
#include "gsicp/se3.hpp"
#include "gsicp/trajectory.hpp"

namespace gsicp {

/// Ordered, lazily decoded RGBD frames plus optional ground truth.
class DatasetStream {
 public:
  using Loader = std::function<Frame(std::size_t)>;

  DatasetStream() = default;
  DatasetStream(Intrinsics intrinsics, std::vector<double> timestamps,
                std::vector<std::optional<Pose>> ground_truth, Loader loader)
      : intrinsics_(intrinsics),
        timestamps_(std::move(timestamps)),
        ground_truth_(std::move(ground_truth)),
        loader_(std::move(loader)) {}

  std::size_t size() const { return timestamps_.size(); }
  const Intrinsics& intrinsics() const { return intrinsics_; }
  double timestamp(std::size_t i) const { return timestamps_.at(i); }
  const std::optional<Pose>& groundTruthPose(std::size_t i) const { return ground_truth_.at(i); }

  /// Decodes frame i. Depth is in metres.
  Frame frame(std::size_t i) const;

  /// Ground-truth samples of the frames that have one, stamped like the frames.
  Trajectory groundTruth() const;

  /// Keeps the first n frames.
  void truncate(std::size_t n);

 private:
  Intrinsics intrinsics_;
  std::vector<double> timestamps_;
  std::vector<std::optional<Pose>> ground_truth_;
  Loader loader_;
};

struct TumOptions {
  Intrinsics intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480};
  double depth_scale = 5000.0;
  double max_dt = 0.02;
};

/// A TUM "timestamp filename" index file.
struct TumIndexEntry {
  double stamp = 0.0;
  std::string file;
};
std::vector<TumIndexEntry> readTumIndex(const std::filesystem::path& path);

/// Greedy nearest-timestamp association: candidate pairs within max_dt are
/// taken in order of increasing time difference, each stamp used at most once.
/// Returns (a index, b index) pairs sorted by a.
std::vector<std::pair<std::size_t, std::size_t>> associateStamps(const std::vector<double>& a,
                                                                 const std::vector<double>& b,
                                                                 double max_dt);

/// TUM RGB-D layout: rgb.txt, depth.txt, groundtruth.txt.
DatasetStream loadTum(const std::filesystem::path& dir, const TumOptions& opt = {});

struct ReplicaOptions {
  Intrinsics intrinsics{600.0, 600.0, 599.5, 339.5, 1200, 680};
  double depth_scale = 6553.5;
};

/// Dense-SLAM Replica export: results/frameNNNNNN.jpg|png, results/depthNNNNNN.png
/// and traj.txt with one row-major camera-to-world 4x4 per line.
DatasetStream loadReplica(const std::filesystem::path& dir, const ReplicaOptions& opt = {});

}  // namespace gsicp
