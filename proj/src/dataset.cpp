#include "gsicp/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "gsicp/errors.hpp"
#include "gsicp/image_io.hpp"

namespace gsicp {

namespace fs = std::filesystem;

Frame DatasetStream::frame(std::size_t i) const {
  if (i >= size()) throw InputError("DatasetStream: frame index out of range");
  return loader_(i);
}

Trajectory DatasetStream::groundTruth() const {
  Trajectory out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (ground_truth_[i]) out.push_back(StampedPose::fromPose(timestamps_[i], *ground_truth_[i]));
  }
  return out;
}

void DatasetStream::truncate(std::size_t n) {
  if (n >= size()) return;
  timestamps_.resize(n);
  ground_truth_.resize(n);
}

std::vector<TumIndexEntry> readTumIndex(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing index file " + path.string());
  std::vector<TumIndexEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    TumIndexEntry e;
    if (!(ss >> e.stamp >> e.file)) {
      throw FormatError(path.string() + " line " + std::to_string(line_no) +
                        ": expected 'timestamp filename'");
    }
    out.push_back(e);
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> associateStamps(const std::vector<double>& a,
                                                                 const std::vector<double>& b,
                                                                 double max_dt) {
  struct Cand {
    double dt;
    std::size_t i;
    std::size_t j;
  };
  std::vector<std::size_t> b_order(b.size());
  for (std::size_t j = 0; j < b.size(); ++j) b_order[j] = j;
  std::sort(b_order.begin(), b_order.end(), [&](std::size_t x, std::size_t y) {
    return b[x] < b[y] || (b[x] == b[y] && x < y);
  });
  std::vector<double> b_sorted(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) b_sorted[k] = b[b_order[k]];

  std::vector<Cand> cands;
  for (std::size_t i = 0; i < a.size(); ++i) {
    auto it = std::lower_bound(b_sorted.begin(), b_sorted.end(), a[i] - max_dt);
    for (; it != b_sorted.end() && *it <= a[i] + max_dt; ++it) {
      const std::size_t j = b_order[static_cast<std::size_t>(it - b_sorted.begin())];
      const double dt = std::abs(a[i] - b[j]);
      if (dt < max_dt) cands.push_back({dt, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Cand& x, const Cand& y) {
    if (x.dt != y.dt) return x.dt < y.dt;
    if (x.i != y.i) return x.i < y.i;
    return x.j < y.j;
  });
  std::vector<bool> used_a(a.size(), false);
  std::vector<bool> used_b(b.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = true;
    out.emplace_back(c.i, c.j);
  }
  std::sort(out.begin(), out.end());
  return out;
}

DatasetStream loadTum(const fs::path& dir, const TumOptions& opt) {
  const auto rgb = readTumIndex(dir / "rgb.txt");
  const auto depth = readTumIndex(dir / "depth.txt");
  const fs::path gt_path = dir / "groundtruth.txt";
  if (!fs::exists(gt_path)) throw FormatError("missing index file " + gt_path.string());
  const Trajectory gt = readTrajectory(gt_path);

  std::vector<double> rgb_t, depth_t;
  for (const auto& e : rgb) rgb_t.push_back(e.stamp);
  for (const auto& e : depth) depth_t.push_back(e.stamp);
  const auto pairs = associateStamps(rgb_t, depth_t, opt.max_dt);
  if (pairs.empty()) throw FormatError("no rgb/depth associations in " + dir.string());

  std::vector<double> stamps;
  std::vector<std::optional<Pose>> gt_poses;
  std::vector<std::pair<fs::path, fs::path>> files;
  for (const auto& [i, j] : pairs) {
    stamps.push_back(rgb_t[i]);
    files.emplace_back(dir / rgb[i].file, dir / depth[j].file);
    std::optional<Pose> g;
    double best = opt.max_dt;
    // gt is sorted (readTrajectory enforces it); scan the neighbourhood.
    auto it = std::lower_bound(gt.begin(), gt.end(), rgb_t[i],
                               [](const StampedPose& p, double t) { return p.stamp < t; });
    for (auto k = it == gt.begin() ? it : it - 1; k != gt.end() && k <= it; ++k) {
      const double dt = std::abs(k->stamp - rgb_t[i]);
      if (dt < best) {
        best = dt;
        g = k->pose();
      }
    }
    gt_poses.push_back(g);
  }

  const Intrinsics intr = opt.intrinsics;
  const double scale = opt.depth_scale;
  auto loader = [files, stamps, intr, scale](std::size_t i) {
    Frame f;
    f.color = loadColorImage(files[i].first);
    f.depth = loadDepthImage(files[i].second, scale);
    f.intrinsics = intr;
    f.intrinsics.width = f.depth.width;
    f.intrinsics.height = f.depth.height;
    f.timestamp = stamps[i];
    f.index = static_cast<int>(i);
    return f;
  };
  return DatasetStream(intr, std::move(stamps), std::move(gt_poses), std::move(loader));
}

namespace {

std::vector<Mat4> readReplicaPoses(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("missing pose file " + path.string());
  std::vector<Mat4> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    Mat4 m;
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        if (!(ss >> m(r, c))) {
          throw FormatError(path.string() + " line " + std::to_string(line_no) +
                            ": expected 16 numbers");
        }
      }
    }
    out.push_back(m);
  }
  return out;
}

}  // namespace

DatasetStream loadReplica(const fs::path& dir, const ReplicaOptions& opt) {
  const fs::path results = dir / "results";
  if (!fs::is_directory(results)) throw FormatError("missing directory " + results.string());
  const auto poses = readReplicaPoses(dir / "traj.txt");

  std::vector<fs::path> colors;
  std::vector<fs::path> depths;
  for (const auto& e : fs::directory_iterator(results)) {
    const std::string name = e.path().filename().string();
    if (name.rfind("frame", 0) == 0) colors.push_back(e.path());
    if (name.rfind("depth", 0) == 0) depths.push_back(e.path());
  }
  std::sort(colors.begin(), colors.end());
  std::sort(depths.begin(), depths.end());
  if (colors.size() != depths.size() || colors.size() != poses.size()) {
    throw FormatError("replica: " + std::to_string(colors.size()) + " colour, " +
                      std::to_string(depths.size()) + " depth images and " +
                      std::to_string(poses.size()) + " poses");
  }
  if (colors.empty()) throw FormatError("replica: no frames in " + results.string());

  std::vector<double> stamps;
  std::vector<std::optional<Pose>> gt;
  for (std::size_t i = 0; i < colors.size(); ++i) {
    stamps.push_back(static_cast<double>(i));
    gt.emplace_back(Pose::fromMatrix(poses[i]));
  }
  const Intrinsics intr = opt.intrinsics;
  const double scale = opt.depth_scale;
  auto loader = [colors, depths, intr, scale](std::size_t i) {
    Frame f;
    f.color = loadColorImage(colors[i]);
    f.depth = loadDepthImage(depths[i], scale);
    f.intrinsics = intr;
    f.intrinsics.width = f.depth.width;
    f.intrinsics.height = f.depth.height;
    f.timestamp = static_cast<double>(i);
    f.index = static_cast<int>(i);
    return f;
  };
  return DatasetStream(intr, std::move(stamps), std::move(gt), std::move(loader));
}

}  // namespace gsicp
