#include <doctest.h>

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gsicp/pipeline.hpp"
#include "gsicp/synth.hpp"
#include "test_helpers.hpp"

using namespace gsicp;
namespace fs = std::filesystem;

namespace {

SlamConfig smallConfig(int frames) {
  SlamConfig c;
  c.dataset.synth.frames = 100;
  c.dataset.max_frames = frames;
  c.tracking.corr_dist_threshold = 0.07;
  c.tracking.kf_ratio_threshold = 0.8;
  c.overlap_dist = 0.1;
  c.mapping.lr.means = 5e-6;
  c.iters_per_frame = 2;
  c.render_downsample = 4;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Synthetic stream whose frames from `blank_from` on carry no depth.
DatasetStream blankingStream(int frames, int blank_from) {
  SynthSpec spec = SynthSpec::defaultScene();
  spec.frames = frames;
  auto scene = std::make_shared<SynthScene>(spec);
  std::vector<double> stamps;
  std::vector<std::optional<Pose>> gt;
  for (int i = 0; i < frames; ++i) {
    stamps.push_back(i);
    gt.emplace_back(scene->pathPose(i));
  }
  return DatasetStream(spec.intrinsics, stamps, gt, [scene, blank_from](std::size_t i) {
    Frame f = scene->renderFrame(scene->pathPose(static_cast<int>(i)), static_cast<int>(i),
                                 static_cast<double>(i));
    if (static_cast<int>(i) >= blank_from) std::fill(f.depth.data.begin(), f.depth.data.end(), 0.0);
    return f;
  });
}

}  // namespace

TEST_CASE("held-out frames skip keyframes") {
  const EvalConfig e;
  CHECK(heldoutFrames(40, e, {}) == std::vector<int>{5, 15, 25, 35});
  CHECK(heldoutFrames(40, e, {0, 15, 30}) == std::vector<int>{5, 25, 35});
  CHECK(heldoutFrames(5, e, {}).empty());
}

TEST_CASE("deterministic run: iteration count, outputs and keyframe bookkeeping") {
  const SlamConfig cfg = smallConfig(12);
  const DatasetStream stream = openDataset(cfg);
  REQUIRE(stream.size() == 12);
  const fs::path out = testutil::tempDir("pipeline_det");
  const SlamReport r = runSlam(cfg, stream, out);
  CHECK_FALSE(r.aborted);
  CHECK(r.trajectory.size() == 12);
  CHECK(r.mapping_iterations == 24);
  REQUIRE_FALSE(r.keyframes.empty());
  CHECK(r.keyframes[0].frame_index == 0);
  CHECK((r.keyframes[0].kind == KeyframeKind::Tracking));
  CHECK(r.keyframes[0].inserted > 0);
  CHECK(r.primitive_history.size() == 12);
  CHECK(r.final_map.size() == r.primitive_history.back());
  CHECK(r.ate_rmse_cm < 2.0);
  CHECK(r.heldout.size() <= 1);
  for (const char* f : {"traj.txt", "metrics.json", "config.json", "map.bin", "loss.csv"}) {
    CHECK(fs::exists(out / f));
  }
  const auto j = nlohmann::json::parse(slurp(out / "metrics.json"));
  CHECK(j.at("frames").get<int>() == 12);
  CHECK(j.at("mapping_iterations").get<int>() == 24);
  CHECK(readTrajectory(out / "traj.txt").size() == 12);
  CHECK(configToJson(loadConfig(out / "config.json")) == configToJson(cfg));

  GaussianMap back;
  readCheckpoint(out / "map.bin", back);
  CHECK(back.size() == r.final_map.size());
}

TEST_CASE("deterministic runs are bit-identical") {
  SlamConfig cfg = smallConfig(10);
  cfg.seed = 5;
  const DatasetStream stream = openDataset(cfg);
  const fs::path a = testutil::tempDir("pipeline_a"), b = testutil::tempDir("pipeline_b");
  const SlamReport ra = runSlam(cfg, stream, a);
  const SlamReport rb = runSlam(cfg, stream, b);
  CHECK(slurp(a / "traj.txt") == slurp(b / "traj.txt"));
  CHECK(slurp(a / "map.bin") == slurp(b / "map.bin"));
  CHECK(ra.final_map.size() == rb.final_map.size());
}

TEST_CASE("free-running mode respects the frame-rate cap and joins cleanly") {
  SlamConfig cfg = smallConfig(8);
  cfg.mode = RunMode::FreeRunning;
  cfg.fps_cap = 16.0;
  const DatasetStream stream = openDataset(cfg);
  const SlamReport r = runSlam(cfg, stream);
  CHECK(r.trajectory.size() == 8);
  CHECK(r.fps <= 16.0);
  CHECK(r.wall_seconds >= 0.5);
  for (const auto& k : r.keyframes) CHECK(k.inserted == -1);
  CHECK(r.final_map.size() > 0);
  CHECK(r.ate_rmse_cm < 5.0);
}

TEST_CASE("frames without depth are lost; too many in a row abort the run") {
  SlamConfig cfg = smallConfig(0);
  cfg.max_lost_frames = 2;
  const SlamReport r = runSlam(cfg, blankingStream(12, 4));
  CHECK(r.aborted);
  CHECK(r.abort_reason.find("frame 6") != std::string::npos);
  CHECK(r.lost_frames == 3);
  REQUIRE(r.trajectory.size() == 7);
  // Lost frames keep extrapolating the motion and add nothing to the map.
  CHECK(r.primitive_history[6] == r.primitive_history[3]);
  const Pose p3 = r.trajectory[3].pose(), p4 = r.trajectory[4].pose();
  const Pose p2 = r.trajectory[2].pose();
  CHECK(((p4 * p3.inverse()).matrix() - (p3 * p2.inverse()).matrix()).norm() < 1e-9);
}

TEST_CASE("the first usable frame founds the map") {
  SlamConfig cfg = smallConfig(0);
  cfg.mapping_enabled = false;
  SynthSpec spec = SynthSpec::defaultScene();
  spec.frames = 6;
  auto scene = std::make_shared<SynthScene>(spec);
  std::vector<double> stamps{0, 1, 2, 3, 4, 5};
  std::vector<std::optional<Pose>> gt;
  for (int i = 0; i < 6; ++i) gt.emplace_back(scene->pathPose(i));
  const DatasetStream s(spec.intrinsics, stamps, gt, [scene](std::size_t i) {
    Frame f = scene->renderFrame(scene->pathPose(static_cast<int>(i)), static_cast<int>(i), i);
    if (i < 2) std::fill(f.depth.data.begin(), f.depth.data.end(), 0.0);
    return f;
  });
  const SlamReport r = runSlam(cfg, s);
  CHECK_FALSE(r.aborted);
  CHECK(r.lost_frames == 2);
  REQUIRE_FALSE(r.keyframes.empty());
  CHECK(r.keyframes[0].frame_index == 2);
  CHECK(r.mapping_iterations == 0);
}
