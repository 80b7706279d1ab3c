#include "gsicp/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include <json.hpp>

#include "gsicp/errors.hpp"
#include "gsicp/metrics.hpp"
#include "gsicp/ssim.hpp"

namespace gsicp {

namespace {

using Clock = std::chrono::steady_clock;

double secondsSince(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Ordered hand-off from the tracking lane to a mapping thread.
class KeyframeQueue {
 public:
  void push(KeyframeMessage msg) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(msg));
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_one();
  }

  /// Takes everything queued. Blocks only when `wait` is set and nothing is queued.
  std::vector<KeyframeMessage> drain(bool wait, bool* closed) {
    std::unique_lock lock(mutex_);
    if (wait) cv_.wait(lock, [&] { return !queue_.empty() || closed_; });
    std::vector<KeyframeMessage> out(std::make_move_iterator(queue_.begin()),
                                     std::make_move_iterator(queue_.end()));
    queue_.clear();
    *closed = closed_;
    return out;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<KeyframeMessage> queue_;
  bool closed_ = false;
};

struct FrameInput {
  PointCloud cloud;
  std::vector<Mat3> source_covs;           // regularised for G-ICP
  std::vector<CovDecomposition> ellipse;   // ellipse-regularised for insertion
};

FrameInput prepareFrame(const Frame& frame, const SlamConfig& cfg) {
  FrameInput in;
  in.cloud = buildCloud(frame, cfg.cloud);
  const CovarianceSet covs = knnCovariances(in.cloud, cfg.cloud.knn, cfg.cloud.eigen_floor);
  const GicpConfig& g = cfg.tracking.gicp;
  in.source_covs.resize(in.cloud.size());
  in.ellipse.resize(in.cloud.size());
  for (std::size_t i = 0; i < in.cloud.size(); ++i) {
    const CovDecomposition d = decomposeCovariance(covs.covariances[i], cfg.cloud.eigen_floor);
    in.source_covs[i] =
        regularizeDecomposition(d, g.mode, g.plane_eps, cfg.cloud.eigen_floor).covariance;
    in.ellipse[i] = ellipseDecomposition(d, g.plane_eps, cfg.cloud.eigen_floor);
  }
  return in;
}

double cloudExtent(const PointCloud& cloud) {
  if (cloud.empty()) return 1.0;
  Vec3 c = Vec3::Zero();
  for (const auto& p : cloud.points) c += p;
  c /= static_cast<double>(cloud.size());
  double r = 0.0;
  for (const auto& p : cloud.points) r = std::max(r, (p - c).norm());
  return std::max(1.1 * r, 1e-3);
}

KeyframeRecord makeRecord(const Frame& frame, KeyframeKind kind, const Pose& pose, int downsample) {
  KeyframeRecord r;
  r.frame_index = frame.index;
  r.timestamp = frame.timestamp;
  r.kind = kind;
  r.camera_to_world = pose;
  r.intrinsics = frame.intrinsics.downsampled(downsample);
  r.color = downsampleImage(frame.color, downsample);
  r.depth = downsampleImage(frame.depth, downsample, true);
  return r;
}

void writeText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  out << text << '\n';
}

}  // namespace

DatasetStream openDataset(const SlamConfig& cfg) {
  DatasetStream s;
  switch (cfg.dataset.format) {
    case DatasetFormat::Synth: {
      SynthScene scene(cfg.dataset.synth);
      s = scene.stream();
      break;
    }
    case DatasetFormat::Tum:
      s = loadTum(cfg.dataset.path, cfg.dataset.tum);
      break;
    case DatasetFormat::Replica:
      s = loadReplica(cfg.dataset.path, cfg.dataset.replica);
      break;
  }
  if (cfg.dataset.max_frames > 0 && s.size() > static_cast<std::size_t>(cfg.dataset.max_frames)) {
    s.truncate(static_cast<std::size_t>(cfg.dataset.max_frames));
  }
  return s;
}

std::vector<int> heldoutFrames(std::size_t frame_count, const EvalConfig& eval,
                               const std::vector<int>& keyframe_indices) {
  std::vector<int> out;
  for (std::size_t i = 0; i < frame_count; ++i) {
    const int idx = static_cast<int>(i);
    if (idx % eval.heldout_every != eval.heldout_offset) continue;
    if (std::find(keyframe_indices.begin(), keyframe_indices.end(), idx) != keyframe_indices.end()) {
      continue;
    }
    out.push_back(idx);
  }
  return out;
}

std::vector<ViewMetrics> evaluateViews(const GaussianSet& map, const Trajectory& trajectory,
                                       const DatasetStream& stream, const std::vector<int>& frames,
                                       int downsample, const RenderConfig& render_cfg) {
  std::vector<ViewMetrics> out;
  for (int idx : frames) {
    if (idx < 0 || static_cast<std::size_t>(idx) >= trajectory.size() ||
        static_cast<std::size_t>(idx) >= stream.size()) {
      continue;
    }
    const Frame f = stream.frame(static_cast<std::size_t>(idx));
    const Intrinsics k = f.intrinsics.downsampled(downsample);
    const Image gt = downsampleImage(f.color, downsample);
    const Pose w2c = trajectory[static_cast<std::size_t>(idx)].pose().inverse();
    const RenderedFrame r = render(map, w2c, k, render_cfg);
    out.push_back({idx, psnr(r.rgb, gt), ssim(r.rgb, gt)});
  }
  return out;
}

SlamReport runSlam(const SlamConfig& cfg_in, const DatasetStream& stream,
                   const std::filesystem::path& out_dir) {
  SlamConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.overlap_dist > 0.0) {
    cfg.insert.overlap_dist = cfg.overlap_dist;
  } else {
    cfg.insert.overlap_dist = cfg.tracking.corrThreshold();
  }

  SlamReport report;
  GaussianMap map;
  std::unique_ptr<Mapper> mapper;
  KeyframeQueue queue;
  std::thread mapping_thread;
  std::atomic<bool> stop{false};
  std::exception_ptr mapping_error;
  const bool free_running = cfg.mode == RunMode::FreeRunning;

  auto startMapper = [&](double extent) {
    report.scene_extent = extent;
    MappingConfig mc = cfg.mapping;
    mc.scene_extent = extent;
    mc.prune.max_scale = cfg.prune_scale_fraction * extent;
    mapper = std::make_unique<Mapper>(map, mc, cfg.insert, cfg.seed);
    if (!free_running) return;
    mapping_thread = std::thread([&] {
      try {
        bool closed = false;
        while (true) {
          const bool idle = mapper->keyframes().empty() || !cfg.mapping_enabled;
          auto msgs = queue.drain(idle, &closed);
          for (auto& m : msgs) mapper->consume(std::move(m));
          if (closed) break;
          if (cfg.mapping_enabled) mapper->iterate(1, &stop);
        }
      } catch (...) {
        mapping_error = std::current_exception();
      }
    });
  };

  auto hand_off = [&](KeyframeMessage msg) -> int {
    if (free_running) {
      queue.push(std::move(msg));
      return -1;
    }
    return mapper->consume(std::move(msg));
  };

  // Joins the mapping thread on every exit path.
  struct Joiner {
    KeyframeQueue& q;
    std::thread& t;
    ~Joiner() {
      if (t.joinable()) {
        q.close();
        t.join();
      }
    }
  } joiner{queue, mapping_thread};

  std::vector<Pose> history;
  int since_tracking_kf = 0;
  int consecutive_lost = 0;
  const double frame_period = cfg.fps_cap > 0.0 ? 1.0 / cfg.fps_cap : 0.0;
  const auto t0 = Clock::now();

  std::size_t processed = 0;
  for (std::size_t i = 0; i < stream.size(); ++i) {
    Frame frame;
    try {
      frame = stream.frame(i);
    } catch (const Error& e) {
      throw FormatError("frame " + std::to_string(i) + ": " + e.what());
    }
    frame.index = static_cast<int>(i);

    std::optional<FrameInput> input;
    try {
      input = prepareFrame(frame, cfg);
    } catch (const DegenerateFrame&) {
      input.reset();
    }

    Pose pose;
    KeyframeKind kind = KeyframeKind::None;
    bool lost = false;
    if (!mapper) {
      // Bootstrap: the first usable frame founds the map.
      if (input) {
        pose = cfg.origin_from_ground_truth && stream.groundTruthPose(i)
                   ? *stream.groundTruthPose(i)
                   : Pose::identity();
        kind = KeyframeKind::Tracking;
        startMapper(cfg.scene_extent > 0.0 ? cfg.scene_extent : cloudExtent(input->cloud));
      } else {
        pose = Pose::identity();
        lost = true;
      }
    } else {
      const Pose prior = constantVelocityPrior(history);
      if (input) {
        const auto snap = map.snapshot(GaussianMap::Scope::TrackingTargets,
                                       cfg.tracking.gicp.mode, cfg.tracking.gicp.plane_eps);
        if (snap->empty()) {
          pose = prior;
          lost = true;
        } else {
          const GaussianView source{input->cloud.points, input->source_covs};
          const TrackResult tr = trackFrame(source, *snap, prior, cfg.tracking);
          pose = tr.pose;
          lost = tr.lost;
          if (!lost) {
            kind = selectKeyframe(tr.corr_ratio, since_tracking_kf, frame.index, cfg.tracking);
          }
        }
      } else {
        pose = prior;
        lost = true;
      }
    }

    if (lost) {
      ++report.lost_frames;
      ++consecutive_lost;
    } else {
      consecutive_lost = 0;
    }

    if (kind != KeyframeKind::None) {
      KeyframeMessage msg;
      msg.record = makeRecord(frame, kind, pose, cfg.render_downsample);
      msg.camera_cloud = std::move(input->cloud);
      msg.regularized = std::move(input->ellipse);
      const int inserted = hand_off(std::move(msg));
      report.keyframes.push_back({frame.index, kind, inserted});
    }
    if (kind == KeyframeKind::Tracking) {
      since_tracking_kf = 1;
    } else {
      ++since_tracking_kf;
    }

    if (mapper && !free_running && cfg.mapping_enabled) mapper->iterate(cfg.iters_per_frame);

    history.push_back(pose);
    report.trajectory.push_back(StampedPose::fromPose(stream.timestamp(i), pose));
    report.primitive_history.push_back(map.size());
    ++processed;

    if (frame_period > 0.0) {
      std::this_thread::sleep_until(
          t0 + std::chrono::duration_cast<Clock::duration>(
                   std::chrono::duration<double>(frame_period * static_cast<double>(i + 1))));
    }
    if (consecutive_lost > cfg.max_lost_frames) {
      report.aborted = true;
      report.abort_reason = "tracking lost for " + std::to_string(consecutive_lost) +
                            " consecutive frames at frame " + std::to_string(i);
      break;
    }
  }

  if (free_running && mapping_thread.joinable()) {
    queue.close();
    mapping_thread.join();
    if (mapping_error) std::rethrow_exception(mapping_error);
  }
  if (mapper && cfg.mapping_enabled && cfg.final_iters > 0) mapper->iterate(cfg.final_iters);

  report.wall_seconds = secondsSince(t0);
  report.fps = report.wall_seconds > 0.0 ? static_cast<double>(processed) / report.wall_seconds : 0.0;
  if (mapper) {
    report.mapping_iterations = mapper->iterations();
    report.rejected_steps = mapper->rejectedSteps();
  }
  report.final_map = map.params();

  const Trajectory gt = stream.groundTruth();
  if (gt.size() >= 2 && report.trajectory.size() >= 2) {
    try {
      const AteResult ate =
          absoluteTrajectoryError(report.trajectory, gt, cfg.eval.align, cfg.eval.max_dt);
      report.ate_rmse_cm = ate.rmse_cm;
      report.ate_matched = ate.matched;
    } catch (const InputError&) {
      // Fewer than two matched poses: ATE stays NaN.
    }
  }

  std::vector<int> kf_indices;
  for (const auto& k : report.keyframes) kf_indices.push_back(k.frame_index);
  const auto views = heldoutFrames(report.trajectory.size(), cfg.eval, kf_indices);
  report.heldout = evaluateViews(report.final_map, report.trajectory, stream, views,
                                 cfg.render_downsample, cfg.mapping.render);
  if (!report.heldout.empty()) {
    double ps = 0.0, ss = 0.0;
    for (const auto& v : report.heldout) {
      ps += v.psnr;
      ss += v.ssim;
    }
    report.mean_psnr = ps / static_cast<double>(report.heldout.size());
    report.mean_ssim = ss / static_cast<double>(report.heldout.size());
  }

  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    writeTrajectory(report.trajectory, out_dir / "traj.txt");
    writeText(out_dir / "metrics.json", reportToJson(report));
    writeText(out_dir / "config.json", configToJson(cfg_in));
    writeCheckpoint(out_dir / "map.bin", map);
    if (mapper) mapper->writeLossCsv((out_dir / "loss.csv").string());
  }
  return report;
}

std::string reportToJson(const SlamReport& r) {
  using nlohmann::json;
  json j;
  j["frames"] = r.trajectory.size();
  j["ate_rmse_cm"] = r.ate_rmse_cm;
  j["ate_matched"] = r.ate_matched;
  j["mean_psnr"] = r.mean_psnr;
  j["mean_ssim"] = r.mean_ssim;
  j["fps"] = r.fps;
  j["wall_seconds"] = r.wall_seconds;
  j["mapping_iterations"] = r.mapping_iterations;
  j["rejected_steps"] = r.rejected_steps;
  j["lost_frames"] = r.lost_frames;
  j["aborted"] = r.aborted;
  j["abort_reason"] = r.abort_reason;
  j["scene_extent"] = r.scene_extent;
  j["final_primitives"] = r.final_map.size();
  j["primitive_history"] = r.primitive_history;
  json kfs = json::array();
  for (const auto& k : r.keyframes) {
    kfs.push_back({{"frame", k.frame_index}, {"kind", toString(k.kind)}, {"inserted", k.inserted}});
  }
  j["keyframes"] = kfs;
  json views = json::array();
  for (const auto& v : r.heldout) {
    // Identical images have infinite PSNR, which JSON cannot carry.
    views.push_back({{"frame", v.frame_index},
                     {"psnr", std::isinf(v.psnr) ? json("inf") : json(v.psnr)},
                     {"ssim", v.ssim}});
  }
  j["heldout"] = views;
  return j.dump(2);
}

}  // namespace gsicp
