// Command-line front end: run, eval, render.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gsicp/config.hpp"
#include "gsicp/errors.hpp"
#include "gsicp/image_io.hpp"
#include "gsicp/metrics.hpp"
#include "gsicp/pipeline.hpp"
#include "gsicp/render.hpp"

namespace fs = std::filesystem;
using namespace gsicp;

namespace {

struct DatasetArgs {
  std::string config;
  std::string dataset;
  std::string format;
  int max_frames = -1;
};

void addDatasetOptions(CLI::App* app, DatasetArgs& a) {
  app->add_option("--config", a.config, "JSON config file")->check(CLI::ExistingFile);
  app->add_option("--dataset", a.dataset, "Dataset directory (tum, replica)");
  app->add_option("--format", a.format, "Dataset format")
      ->check(CLI::IsMember({"tum", "replica", "synth"}));
  app->add_option("--max-frames", a.max_frames, "Process at most this many frames");
}

SlamConfig resolveConfig(const DatasetArgs& a) {
  SlamConfig cfg = a.config.empty() ? SlamConfig{} : loadConfig(a.config);
  if (!a.dataset.empty()) cfg.dataset.path = a.dataset;
  if (!a.format.empty()) cfg.dataset.format = parseDatasetFormat(a.format);
  if (a.max_frames >= 0) cfg.dataset.max_frames = a.max_frames;
  if (cfg.dataset.format != DatasetFormat::Synth && cfg.dataset.path.empty()) {
    throw InputError("--dataset is required for format " + toString(cfg.dataset.format));
  }
  return cfg;
}

std::vector<int> keyframesFromMetrics(const std::string& path) {
  std::vector<int> out;
  if (path.empty()) return out;
  std::ifstream in(path);
  if (!in) throw InputError("cannot read " + path);
  const auto j = nlohmann::json::parse(in);
  for (const auto& k : j.at("keyframes")) out.push_back(k.at("frame").get<int>());
  return out;
}

std::string formatDb(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << std::fixed << v;
  return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled G-ICP tracking and Gaussian-splatting mapping for RGBD sequences"};
  app.require_subcommand(1);

  DatasetArgs run_ds;
  std::string run_mode, run_out;
  std::optional<double> run_fps;
  std::optional<std::uint64_t> run_seed;
  CLI::App* run = app.add_subcommand("run", "Run SLAM on a dataset");
  addDatasetOptions(run, run_ds);
  run->add_option("--mode", run_mode, "det or free")->check(CLI::IsMember({"det", "free"}));
  run->add_option("--fps-cap", run_fps, "Limit input rate (frames per second)");
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--seed", run_seed, "Random seed");

  DatasetArgs eval_ds;
  std::string eval_traj, eval_map, eval_metrics;
  CLI::App* eval = app.add_subcommand("eval", "Recompute metrics from a saved trajectory and map");
  addDatasetOptions(eval, eval_ds);
  eval->add_option("--traj", eval_traj, "Estimated trajectory (TUM format)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--map", eval_map, "Map checkpoint")->check(CLI::ExistingFile);
  eval->add_option("--metrics", eval_metrics,
                   "metrics.json of the run; its keyframes are excluded from held-out views")
      ->check(CLI::ExistingFile);

  DatasetArgs render_ds;
  std::string render_map, render_poses, render_out;
  CLI::App* rend = app.add_subcommand("render", "Render a saved map from given poses to PNGs");
  addDatasetOptions(rend, render_ds);
  rend->add_option("--map", render_map, "Map checkpoint")->required()->check(CLI::ExistingFile);
  rend->add_option("--poses", render_poses, "Camera-to-world poses (TUM format)")
      ->required()
      ->check(CLI::ExistingFile);
  rend->add_option("--out", render_out, "Output directory")->required();

  DatasetArgs synth_ds;
  std::string synth_out;
  CLI::App* synth = app.add_subcommand("synth", "Write the synthetic sequence in Replica layout");
  synth->add_option("--config", synth_ds.config, "JSON config file")->check(CLI::ExistingFile);
  synth->add_option("--max-frames", synth_ds.max_frames, "Write at most this many frames");
  synth->add_option("--out", synth_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      SlamConfig cfg = resolveConfig(run_ds);
      if (!run_mode.empty()) cfg.mode = parseRunMode(run_mode);
      if (run_fps) cfg.fps_cap = *run_fps;
      if (run_seed) cfg.seed = *run_seed;
      cfg.validate();
      const DatasetStream stream = openDataset(cfg);
      const SlamReport r = runSlam(cfg, stream, run_out);
      std::cout << "frames " << r.trajectory.size() << "  keyframes " << r.keyframes.size()
                << "  primitives " << r.final_map.size() << "\n"
                << "ATE RMSE " << formatDb(r.ate_rmse_cm) << " cm  held-out PSNR "
                << formatDb(r.mean_psnr) << " dB  SSIM " << formatDb(r.mean_ssim) << "\n"
                << "system FPS " << formatDb(r.fps) << "  mapping iterations "
                << r.mapping_iterations << "\n";
      if (r.aborted) {
        std::cerr << "aborted: " << r.abort_reason << "\n";
        return 2;
      }
      return 0;
    }

    if (*eval) {
      const SlamConfig cfg = resolveConfig(eval_ds);
      const DatasetStream stream = openDataset(cfg);
      const Trajectory est = readTrajectory(eval_traj);
      nlohmann::json j;
      const Trajectory gt = stream.groundTruth();
      if (gt.size() >= 2) {
        const AteResult ate = absoluteTrajectoryError(est, gt, cfg.eval.align, cfg.eval.max_dt);
        j["ate_rmse_cm"] = ate.rmse_cm;
        j["ate_matched"] = ate.matched;
      }
      if (!eval_map.empty()) {
        GaussianMap map;
        readCheckpoint(eval_map, map);
        const auto frames = heldoutFrames(std::min(est.size(), stream.size()), cfg.eval,
                                          keyframesFromMetrics(eval_metrics));
        const auto views = evaluateViews(map.params(), est, stream, frames,
                                         cfg.render_downsample, cfg.mapping.render);
        double ps = 0.0, ss = 0.0;
        for (const auto& v : views) {
          ps += v.psnr;
          ss += v.ssim;
        }
        j["heldout_views"] = views.size();
        if (!views.empty()) {
          j["mean_psnr"] = ps / static_cast<double>(views.size());
          j["mean_ssim"] = ss / static_cast<double>(views.size());
        }
      }
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (*rend) {
      const SlamConfig cfg = resolveConfig(render_ds);
      const DatasetStream stream = openDataset(cfg);
      const Intrinsics k = stream.intrinsics().downsampled(cfg.render_downsample);
      GaussianMap map;
      readCheckpoint(render_map, map);
      const GaussianSet params = map.params();
      const Trajectory poses = readTrajectory(render_poses);
      fs::create_directories(render_out);
      char name[64];
      for (std::size_t i = 0; i < poses.size(); ++i) {
        const RenderedFrame r = render(params, poses[i].pose().inverse(), k, cfg.mapping.render);
        std::snprintf(name, sizeof(name), "rgb_%06zu.png", i);
        writeColorImage(fs::path(render_out) / name, r.rgb);
        std::snprintf(name, sizeof(name), "depth_%06zu.png", i);
        writeDepthImage(fs::path(render_out) / name, r.depth, 5000.0);
      }
      std::cout << "rendered " << poses.size() << " views to " << render_out << "\n";
      return 0;
    }

    if (*synth) {
      SlamConfig cfg = resolveConfig(synth_ds);
      cfg.dataset.format = DatasetFormat::Synth;
      const DatasetStream stream = openDataset(cfg);
      const double depth_scale = cfg.dataset.replica.depth_scale;
      fs::create_directories(fs::path(synth_out) / "results");
      std::ofstream traj(fs::path(synth_out) / "traj.txt");
      traj.precision(17);
      char name[64];
      for (std::size_t i = 0; i < stream.size(); ++i) {
        const Frame f = stream.frame(i);
        std::snprintf(name, sizeof(name), "results/frame%06zu.png", i);
        writeColorImage(fs::path(synth_out) / name, f.color);
        std::snprintf(name, sizeof(name), "results/depth%06zu.png", i);
        writeDepthImage(fs::path(synth_out) / name, f.depth, depth_scale);
        const Mat4 m = stream.groundTruthPose(i)->matrix();
        for (int r = 0; r < 4; ++r) {
          for (int c = 0; c < 4; ++c) traj << m(r, c) << (r == 3 && c == 3 ? "\n" : " ");
        }
      }
      std::cout << "wrote " << stream.size() << " frames to " << synth_out << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
