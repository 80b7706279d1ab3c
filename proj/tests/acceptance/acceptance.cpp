// End-to-end acceptance checks. Each criterion prints one PASS, FAIL or SKIP
// line. The exit status is non-zero only when a check could not be run at all.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

#include "gsicp/cloud.hpp"
#include "gsicp/config.hpp"
#include "gsicp/dataset.hpp"
#include "gsicp/gicp.hpp"
#include "gsicp/image_io.hpp"
#include "gsicp/kdtree.hpp"
#include "gsicp/pipeline.hpp"
#include "gsicp/render.hpp"
#include "gsicp/trajectory.hpp"
#include "render_fixtures.hpp"
#include "test_helpers.hpp"

using namespace gsicp;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  enum Status { Pass, Fail, Skip } status = Fail;
  std::string detail;
};

Outcome verdict(bool ok, std::string detail) {
  return {ok ? Outcome::Pass : Outcome::Fail, std::move(detail)};
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SlamConfig baseConfig() {
  return loadConfig(fs::path(GSICP_SOURCE_DIR) / "configs" / "synth_acceptance.json");
}

// Mean PSNR over every odd non-keyframe frame. Reported next to the official
// held-out score, which rests on few views once keyframes are dense.
double densePsnr(const SlamConfig& cfg, const DatasetStream& stream, const SlamReport& r) {
  std::vector<int> kfs;
  for (const auto& k : r.keyframes) kfs.push_back(k.frame_index);
  EvalConfig dense = cfg.eval;
  dense.heldout_every = 2;
  dense.heldout_offset = 1;
  const auto views = evaluateViews(r.final_map, r.trajectory, stream,
                                   heldoutFrames(r.trajectory.size(), dense, kfs),
                                   cfg.render_downsample, cfg.mapping.render);
  double sum = 0.0;
  for (const auto& v : views) sum += v.psnr;
  return views.empty() ? 0.0 : sum / static_cast<double>(views.size());
}

struct Run {
  SlamReport report;
  double dense_psnr = 0.0;
};

// Synthetic-sequence runs shared between criteria, keyed by variant name.
class Runs {
 public:
  const SlamReport& get(const std::string& name, const std::function<void(SlamConfig&)>& tweak) {
    return run(name, tweak).report;
  }
  const Run& run(const std::string& name, const std::function<void(SlamConfig&)>& tweak) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    SlamConfig cfg = baseConfig();
    tweak(cfg);
    cfg.validate();
    std::fprintf(stderr, "  running variant %s ...\n", name.c_str());
    const DatasetStream stream = openDataset(cfg);
    Run r{runSlam(cfg, stream), 0.0};
    r.dense_psnr = densePsnr(cfg, stream, r.report);
    std::fprintf(stderr, "  %s: ATE %.3f cm, PSNR %.2f dB (dense %.2f), %zu primitives, %.1f s\n",
                 name.c_str(), r.report.ate_rmse_cm, r.report.mean_psnr, r.dense_psnr,
                 r.report.final_map.size(), r.report.wall_seconds);
    return cache_.emplace(name, std::move(r)).first->second;
  }
  const SlamReport& base() { return run("base", [](SlamConfig&) {}).report; }
  double dense(const std::string& name) const { return cache_.at(name).dense_psnr; }

 private:
  std::map<std::string, Run> cache_;
};

Outcome gicpRecovery() {
  std::mt19937_64 rng(101);
  int good = 0;
  double worst_ms = 0.0, worst_deg = 0.0, worst_mm = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::vector<Vec3> pts = testutil::boxSurfacePoints(rng, 500);
    const Pose gt = testutil::randomPose(rng, 10.0 * M_PI / 180.0, 0.1);
    const auto t0 = std::chrono::steady_clock::now();
    PointCloud src;
    src.points = pts;
    src.colors.assign(pts.size(), Vec3::Zero());
    PointCloud tgt = src;
    for (Vec3& p : tgt.points) p = gt * p;
    std::vector<Mat3> src_cov, tgt_cov;
    for (const Mat3& c : knnCovariances(src, 10).covariances) {
      src_cov.push_back(regularizeCovariance(c, Regularization::Ellipse).covariance);
    }
    for (const Mat3& c : knnCovariances(tgt, 10).covariances) {
      tgt_cov.push_back(regularizeCovariance(c, Regularization::Ellipse).covariance);
    }
    const KdTree index(tgt.points);
    Pose est = Pose::identity();
    try {
      est = align({src.points, src_cov}, index, {tgt.points, tgt_cov}, Pose::identity(),
                  GicpConfig{})
                .pose;
    } catch (const TrackingLost&) {
    }
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const PoseDelta e = poseDelta(est, gt);
    const double deg = e.angle * 180.0 / M_PI, mm = e.distance * 1000.0;
    if (deg <= 0.5 && mm <= 5.0) ++good;
    worst_ms = std::max(worst_ms, ms);
    worst_deg = std::max(worst_deg, deg);
    worst_mm = std::max(worst_mm, mm);
  }
  return verdict(good >= 99 && worst_ms < 50.0,
                 fmt("%.0f/100 recovered, worst %.2g deg / %.2g mm, slowest trial %.1f ms", good,
                     worst_deg, worst_mm, worst_ms));
}

Outcome regularizationOrdering(Runs& runs) {
  auto noisy = [](Regularization mode) {
    return [mode](SlamConfig& c) {
      c.dataset.synth.depth_noise = 1.0;
      c.dataset.synth.color_noise = 0.01;
      c.tracking.gicp.mode = mode;
    };
  };
  const double e = runs.get("noisy_ellipse", noisy(Regularization::Ellipse)).ate_rmse_cm;
  const double p = runs.get("noisy_plane", noisy(Regularization::Plane)).ate_rmse_cm;
  const double n = runs.get("noisy_none", noisy(Regularization::None)).ate_rmse_cm;
  return verdict(e < p && p < n, fmt("ATE ellipse %.3f, plane %.3f, none %.3f cm", e, p, n));
}

Outcome scaleOrdering(Runs& runs) {
  const SlamReport& a = runs.base();
  const SlamReport& c =
      runs.get("scale_constant", [](SlamConfig& s) { s.insert.scale_init = ScaleInit::Constant; });
  const SlamReport& n =
      runs.get("scale_naive", [](SlamConfig& s) { s.insert.scale_init = ScaleInit::Naive; });
  const bool psnr_ok = a.mean_psnr >= c.mean_psnr && c.mean_psnr >= n.mean_psnr;
  const bool ate_ok = n.ate_rmse_cm > a.ate_rmse_cm && n.ate_rmse_cm > c.ate_rmse_cm;
  return verdict(psnr_ok && ate_ok,
                 fmt("PSNR aligned %.2f, constant %.2f, naive %.2f dB; ", a.mean_psnr, c.mean_psnr,
                     n.mean_psnr) +
                     fmt("ATE aligned %.3f, constant %.3f, naive %.3f cm", a.ate_rmse_cm,
                         c.ate_rmse_cm, n.ate_rmse_cm) +
                     fmt("; dense-set PSNR %.2f / %.2f / %.2f", runs.dense("base"),
                         runs.dense("scale_constant"), runs.dense("scale_naive")));
}

Outcome keyframeSeparation(Runs& runs) {
  const SlamReport& base = runs.base();
  const SlamReport& promoted =
      runs.get("promote", [](SlamConfig& c) { c.tracking.promote_mapping_only = true; });
  // Tracking keyframes only at the forced 30-frame interval, no mapping-only frames.
  const SlamReport& only30 = runs.get("every30", [](SlamConfig& c) {
    c.tracking.kf_ratio_threshold = 0.0;
    c.tracking.mapping_only_interval = 0;
  });
  return verdict(base.ate_rmse_cm <= promoted.ate_rmse_cm && base.mean_psnr >= only30.mean_psnr,
                 fmt("ATE separated %.3f vs promoted %.3f cm; PSNR separated %.2f vs every-30 "
                     "%.2f dB",
                     base.ate_rmse_cm, promoted.ate_rmse_cm, base.mean_psnr, only30.mean_psnr) +
                     fmt("; dense-set PSNR %.2f vs %.2f", runs.dense("base"), runs.dense("every30")));
}

Outcome trainingChoice(Runs& runs) {
  const SlamReport& random = runs.base();
  const SlamReport& recent =
      runs.get("recent", [](SlamConfig& c) { c.mapping.training = TrainingChoice::Recent; });
  return verdict(random.mean_psnr > recent.mean_psnr,
                 fmt("PSNR random %.2f vs recent-1 %.2f dB; dense-set %.2f vs %.2f", random.mean_psnr,
                     recent.mean_psnr, runs.dense("base"), runs.dense("recent")));
}

Outcome pruning(Runs& runs) {
  const SlamReport& pruned = runs.base();
  const SlamReport& kept =
      runs.get("no_prune", [](SlamConfig& c) { c.mapping.prune_enabled = false; });
  return verdict(pruned.ate_rmse_cm <= kept.ate_rmse_cm && pruned.mean_psnr >= kept.mean_psnr,
                 fmt("pruning ATE %.3f cm / PSNR %.2f dB vs none %.3f cm / %.2f dB",
                     pruned.ate_rmse_cm, pruned.mean_psnr, kept.ate_rmse_cm, kept.mean_psnr) +
                     fmt("; dense-set PSNR %.2f vs %.2f", runs.dense("base"), runs.dense("no_prune")));
}

Outcome renderGradients() {
  using namespace renderfix;
  const Intrinsics k = smallIntrinsics();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0.0, 1.0);
  const double h = 1e-5;
  double worst[5] = {0, 0, 0, 0, 0};
  int checked = 0, replaced = 0;
  while (checked < 20 && replaced < 200) {
    const Pose c2w = testutil::randomPose(rng, 0.3, 0.2);
    const Pose w2c = c2w.inverse();
    GaussianSet s = randomScene(rng, 3, c2w);
    Objective obj{Image(16, 16, 3), Image(16, 16, 1)};
    for (double& v : obj.wr.data) v = n(rng);
    for (double& v : obj.wd.data) v = n(rng);
    RenderState st;
    render(s, w2c, k, {}, &st);
    const GaussianGrads g = renderBackward(s, w2c, k, st, obj.wr, obj.wd);

    bool crossing = false;
    double err[5] = {0, 0, 0, 0, 0};
    for (int cls = 0; cls < 5 && !crossing; ++cls) {
      double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
      for (int i = 0; i < 3; ++i) {
        for (int c = 0; c < kDims[cls]; ++c) {
          double& p = paramRef(s, cls, i, c);
          const double orig = p;
          auto fd = [&](double step) {
            p = orig + step;
            const double up = obj(s, w2c, k);
            p = orig - step;
            const double dn = obj(s, w2c, k);
            p = orig;
            return (up - dn) / (2.0 * step);
          };
          const double num = fd(h);
          // The alpha cutoff is not differentiable; a stencil straddling it
          // shows up as step dependence and the scene is redrawn.
          if (std::abs(num - fd(h / 4.0)) > 1e-5 * std::max(1.0, std::abs(num))) crossing = true;
          const double ana = analyticGrad(g, cls, i, c);
          diff2 += (ana - num) * (ana - num);
          a2 += ana * ana;
          n2 += num * num;
        }
      }
      err[cls] = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-10});
    }
    if (crossing) {
      ++replaced;
      continue;
    }
    for (int cls = 0; cls < 5; ++cls) worst[cls] = std::max(worst[cls], err[cls]);
    ++checked;
  }
  const double w = *std::max_element(worst, worst + 5);
  return verdict(checked == 20 && w < 1e-3,
                 fmt("%.0f scenes (%.0f redrawn), worst relative error %.2g", checked, replaced,
                     w) +
                     fmt(" (means %.1g, rotations %.1g, log-scales %.1g, colors %.1g", worst[0],
                         worst[1], worst[2], worst[3]) +
                     fmt(", opacity %.1g)", worst[4]));
}

Outcome compositing() {
  using namespace renderfix;
  std::mt19937_64 rng(88);
  const Intrinsics k = smallIntrinsics(32, 24.0);
  double worst = 0.0;
  for (int scene = 0; scene < 10; ++scene) {
    const Pose c2w = testutil::randomPose(rng, 0.3, 0.2);
    const GaussianSet s = randomScene(rng, 25, c2w);
    RenderState st;
    render(s, c2w.inverse(), k, {}, &st);
    for (std::size_t p = 0; p < st.weight_sum.size(); ++p) {
      worst = std::max(worst, std::abs(st.weight_sum[p] + st.final_transmittance[p] - 1.0));
    }
  }
  return verdict(worst <= 1e-6, fmt("max |sum a_i T_i + T_final - 1| = %.2g over 10 scenes", worst));
}

Outcome endToEnd(Runs& runs) {
  const SlamReport& r = runs.base();
  return verdict(!r.aborted && r.ate_rmse_cm < 1.0 && r.mean_psnr > 25.0 && r.wall_seconds < 600.0,
                 fmt("ATE %.3f cm, held-out PSNR %.2f dB over %.0f views, %.1f s", r.ate_rmse_cm,
                     r.mean_psnr, static_cast<double>(r.heldout.size()), r.wall_seconds) +
                     fmt("; dense-set PSNR %.2f (not gating)", runs.dense("base")));
}

Outcome determinism() {
  SlamConfig cfg = baseConfig();
  cfg.dataset.max_frames = 30;
  const DatasetStream stream = openDataset(cfg);
  const fs::path a = testutil::tempDir("accept_det_a"), b = testutil::tempDir("accept_det_b");
  const SlamReport ra = runSlam(cfg, stream, a);
  const SlamReport rb = runSlam(cfg, stream, b);
  const bool same_traj = slurp(a / "traj.txt") == slurp(b / "traj.txt");
  return verdict(same_traj && ra.final_map.size() == rb.final_map.size(),
                 std::string(same_traj ? "trajectories identical" : "trajectories differ") +
                     fmt(", primitives %.0f / %.0f", ra.final_map.size(), rb.final_map.size()));
}

Outcome formatFidelity() {
  const fs::path dir = testutil::tempDir("accept_tum");
  testutil::writeTumFixture(dir);
  std::vector<std::string> problems;

  const auto pairs = associateStamps({100.0, 100.1, 100.2}, {100.01, 100.095, 100.215, 100.5}, 0.02);
  const std::vector<std::pair<std::size_t, std::size_t>> expected{{0, 0}, {1, 1}, {2, 2}};
  if (pairs != expected) problems.push_back("association");

  const DatasetStream s = loadTum(dir);
  if (s.size() != 3) problems.push_back("frame count");
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Frame f = s.frame(i);
    if (f.depth.at(3, 3) != static_cast<double>(i + 1) || f.depth.at(0, 0) != 0.0) {
      problems.push_back("depth scale");
      break;
    }
  }
  Image d(5, 4, 1, 0.0);
  d.at(1, 1) = 0.0002;
  d.at(2, 3) = 13.1;
  writeDepthImage(dir / "d.png", d, 5000.0);
  if (loadDepthImage(dir / "d.png", 5000.0).data != d.data) problems.push_back("depth png");

  std::mt19937_64 rng(5);
  Trajectory t = s.groundTruth();
  for (int i = 0; i < 100; ++i) {
    t.push_back(StampedPose::fromPose(200.0 + 0.033 * i, testutil::randomPose(rng, 3.0, 4.0)));
  }
  writeTrajectory(t, dir / "traj.txt");
  const Trajectory back = readTrajectory(dir / "traj.txt");
  bool exact = back.size() == t.size();
  for (std::size_t i = 0; exact && i < t.size(); ++i) {
    exact = back[i].stamp == t[i].stamp && back[i].translation == t[i].translation &&
            back[i].rotation.coeffs() == canonicalQuaternion(t[i].rotation).coeffs();
  }
  writeTrajectory(back, dir / "traj2.txt");
  if (!exact || slurp(dir / "traj.txt") != slurp(dir / "traj2.txt")) {
    problems.push_back("trajectory round trip");
  }

  std::string detail = "association, depth/5000 and trajectory round trip exact";
  if (!problems.empty()) {
    detail = "mismatch in";
    for (const auto& p : problems) detail += " " + p;
  }
  return verdict(problems.empty(), detail);
}

Outcome tumSanity() {
  const char* env = std::getenv("GSICP_TUM_FR2_XYZ");
  const fs::path dir = env ? env : "data/rgbd_dataset_freiburg2_xyz";
  if (!fs::exists(dir / "rgb.txt")) {
    return {Outcome::Skip, "TUM fr2/xyz not found (set GSICP_TUM_FR2_XYZ)"};
  }
  SlamConfig cfg = loadConfig(fs::path(GSICP_SOURCE_DIR) / "configs" / "tum_fr2_xyz.json");
  cfg.dataset.path = dir;
  const SlamReport r = runSlam(cfg, openDataset(cfg));
  return verdict(!r.aborted && r.ate_rmse_cm < 10.0,
                 fmt("ATE %.2f cm over %.0f frames", r.ate_rmse_cm,
                     static_cast<double>(r.trajectory.size())));
}

}  // namespace

int main() {
  Runs runs;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"G-ICP recovery", gicpRecovery},
      {"regularization ordering", [&] { return regularizationOrdering(runs); }},
      {"covariance sharing and scale alignment", [&] { return scaleOrdering(runs); }},
      {"keyframe separation", [&] { return keyframeSeparation(runs); }},
      {"random keyframe training", [&] { return trainingChoice(runs); }},
      {"pruning", [&] { return pruning(runs); }},
      {"renderer gradients", renderGradients},
      {"compositing conservation", compositing},
      {"end-to-end synthetic SLAM", [&] { return endToEnd(runs); }},
      {"determinism", determinism},
      {"format fidelity", formatFidelity},
      {"TUM fr2/xyz sanity", tumSanity},
  };
  int errors = 0, passed = 0, failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Outcome::Fail, std::string("error: ") + e.what()};
      ++errors;
    }
    const char* tag = o.status == Outcome::Pass ? "PASS" : o.status == Outcome::Fail ? "FAIL" : "SKIP";
    passed += o.status == Outcome::Pass;
    failed += o.status == Outcome::Fail;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, tag, criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d passed, %d failed, %zu skipped\n", passed, failed,
              criteria.size() - passed - failed);
  return errors == 0 ? 0 : 1;
}
