#include <doctest.h>

#include <fstream>
#include <limits>

#include "gsicp/dataset.hpp"
#include "gsicp/errors.hpp"
#include "gsicp/image_io.hpp"
#include "gsicp/metrics.hpp"
#include "gsicp/ssim.hpp"
#include "gsicp/trajectory.hpp"
#include "test_helpers.hpp"

using namespace gsicp;
namespace fs = std::filesystem;

namespace {

fs::path dataDir() {
  const char* env = std::getenv("GSICP_TEST_DATA");
  REQUIRE(env != nullptr);
  return env;
}

Trajectory randomTrajectory(std::mt19937_64& rng, int n) {
  Trajectory t;
  for (int i = 0; i < n; ++i) {
    t.push_back(StampedPose::fromPose(1.0 + 0.033 * i, testutil::randomPose(rng, 3.0, 4.0)));
  }
  return t;
}

}  // namespace

TEST_CASE("trajectory text format") {
  CHECK(formatTrajectoryLine(StampedPose{}) == "0 0 0 0 0 0 0 1");
  StampedPose neg;
  neg.stamp = 2.5;
  neg.rotation = Quat(-0.5, 0.5, -0.5, 0.5);
  CHECK(formatTrajectoryLine(neg) == "2.5 0 0 0 -0.5 0.5 -0.5 0.5");
  CHECK_THROWS_AS(parseTrajectory("1 2 3\n"), FormatError);
  try {
    parseTrajectory("# header\n1 0 0 0 0 0 0 1\n2 0 0 0 0 0 0 x\n");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
  CHECK_THROWS_AS(parseTrajectory("2 0 0 0 0 0 0 1\n1 0 0 0 0 0 0 1\n"), FormatError);
}

TEST_CASE("trajectory write/read round trip is bit-exact") {
  std::mt19937_64 rng(1);
  const Trajectory t = randomTrajectory(rng, 100);
  const fs::path p = testutil::tempDir("traj") / "traj.txt";
  writeTrajectory(t, p);
  const Trajectory back = readTrajectory(p);
  REQUIRE(back.size() == t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const Quat q = canonicalQuaternion(t[i].rotation);
    CHECK(back[i].stamp == t[i].stamp);
    CHECK(back[i].translation == t[i].translation);
    CHECK(back[i].rotation.coeffs() == q.coeffs());
    CHECK(back[i].rotation.w() >= 0.0);
  }
  writeTrajectory(back, p);
  CHECK(readTrajectory(p).size() == 100);
}

TEST_CASE("psnr examples") {
  const Image a(9, 7, 3, 0.5);
  CHECK(psnr(a, a) == std::numeric_limits<double>::infinity());
  CHECK(psnr(Image(9, 7, 3, 0.6), a) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK_THROWS_AS(psnr(Image(9, 7, 1), a), InputError);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Image noise(9, 7, 3);
  for (auto& v : noise.data) v = u(rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double amp : {0.01, 0.02, 0.05, 0.1, 0.2}) {
    Image b = a;
    for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] += amp * noise.data[i];
    const double v = psnr(b, a);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("ssim of constant images matches the closed form") {
  const double c1 = 0.01 * 0.01;
  CHECK(ssim(Image(12, 12, 1, 0.0), Image(12, 12, 1, 1.0)) ==
        doctest::Approx(c1 / (1.0 + c1)).epsilon(1e-12));
  CHECK(ssim(Image(12, 12, 3, 0.3), Image(12, 12, 3, 0.3)) == doctest::Approx(1.0));
}

TEST_CASE("ATE examples") {
  std::mt19937_64 rng(3);
  const Trajectory gt = randomTrajectory(rng, 40);
  CHECK(ateRmse(gt, gt, true) < 1e-9);
  CHECK(ateRmse(gt, gt, false) == 0.0);

  const Pose rigid = testutil::randomPose(rng, 2.0, 3.0);
  Trajectory moved;
  for (const auto& p : gt) moved.push_back(StampedPose::fromPose(p.stamp, rigid * p.pose()));
  CHECK(ateRmse(moved, gt, true) < 1e-9);
  CHECK(ateRmse(moved, gt, false) > 1.0);

  Trajectory a, b;
  a.push_back(StampedPose::fromPose(0.0, Pose(Mat3::Identity(), Vec3(0.03, 0, 0))));
  a.push_back(StampedPose::fromPose(1.0, Pose(Mat3::Identity(), Vec3(1, 0.04, 0))));
  b.push_back(StampedPose::fromPose(0.0, Pose()));
  b.push_back(StampedPose::fromPose(1.0, Pose(Mat3::Identity(), Vec3(1, 0, 0))));
  const AteResult r = absoluteTrajectoryError(a, b, false);
  CHECK(r.rmse_cm == doctest::Approx(std::sqrt((9.0 + 16.0) / 2.0)).epsilon(1e-12));
  CHECK(r.matched == 2);

  CHECK_THROWS_AS(ateRmse(Trajectory(a.begin(), a.begin() + 1), b, false), InputError);
}

TEST_CASE("ATE with alignment is invariant to a rigid motion of the estimate") {
  std::mt19937_64 rng(4);
  const Trajectory gt = randomTrajectory(rng, 60);
  Trajectory est;
  std::normal_distribution<double> n(0.0, 0.01);
  for (const auto& p : gt) {
    est.push_back(StampedPose::fromPose(
        p.stamp, Pose(p.pose().rotation(), p.translation + Vec3(n(rng), n(rng), n(rng)))));
  }
  const double base = ateRmse(est, gt, true);
  for (int k = 0; k < 5; ++k) {
    const Pose t = testutil::randomPose(rng, 3.0, 10.0);
    Trajectory moved;
    for (const auto& p : est) moved.push_back(StampedPose::fromPose(p.stamp, t * p.pose()));
    CHECK(ateRmse(moved, gt, true) == doctest::Approx(base).epsilon(1e-9));
  }
}

TEST_CASE("timestamp association") {
  const auto pairs = associateStamps({0.000}, {0.010, 0.500}, 0.02);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].second == 0);
  CHECK(associateStamps({0.0}, {0.5}, 0.02).empty());
  // Each stamp is used at most once; the closer pair wins.
  const auto two = associateStamps({1.0, 1.012}, {1.011}, 0.02);
  REQUIRE(two.size() == 1);
  CHECK(two[0].first == 1);
}

TEST_CASE("TUM loader") {
  const fs::path dir = testutil::tempDir("tum");
  testutil::writeTumFixture(dir);
  const DatasetStream s = loadTum(dir);
  REQUIRE(s.size() == 3);
  CHECK(s.timestamp(0) == 100.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const Frame f = s.frame(i);
    CHECK(f.depth.at(3, 3) == static_cast<double>(i + 1));  // raw / 5000, exact
    CHECK(f.depth.at(0, 0) == 0.0);
    CHECK(f.color.at(2, 2, 1) == doctest::Approx(0.2 * (i + 1)).epsilon(1.0 / 255));
    CHECK(s.groundTruthPose(i).has_value());
  }
  CHECK(s.groundTruthPose(2)->translation() == Vec3(0.2, 0.05, 0));
  CHECK(s.groundTruth().size() == 3);

  const DatasetStream again = loadTum(dir);
  CHECK(again.size() == s.size());
  CHECK(again.frame(1).depth.data == s.frame(1).depth.data);

  fs::remove(dir / "depth.txt");
  CHECK_THROWS_AS(loadTum(dir), FormatError);
}

TEST_CASE("depth PNG scale is honoured") {
  const fs::path dir = testutil::tempDir("depthpng");
  Image d(4, 3, 1, 0.0);
  d.at(1, 1) = 1.0;
  d.at(2, 1) = 0.0002;
  d.at(3, 2) = 13.1;
  writeDepthImage(dir / "d.png", d, 5000.0);
  const Image back = loadDepthImage(dir / "d.png", 5000.0);
  CHECK(back.at(1, 1) == 1.0);
  CHECK(back.at(2, 1) == 0.0002);
  CHECK(back.at(3, 2) == 65500.0 / 5000.0);
  CHECK(back.at(0, 0) == 0.0);
  CHECK(loadDepthImage(dir / "d.png", 1000.0).at(1, 1) == 5.0);
}

TEST_CASE("Replica loader on the checked-in fixture") {
  ReplicaOptions opt;
  opt.intrinsics = {10.0, 10.0, 3.5, 2.5, 8, 6};
  const DatasetStream s = loadReplica(dataDir() / "replica_mini", opt);
  REQUIRE(s.size() == 2);
  CHECK(s.groundTruthPose(0)->matrix() == Mat4::Identity());
  const Pose p1 = *s.groundTruthPose(1);
  CHECK(p1.translation() == Vec3(0.5, -0.25, 0.125));
  CHECK(p1.rotation()(0, 0) == 0.8775825618903728);
  CHECK(p1.rotation()(1, 0) == 0.479425538604203);

  const Frame f0 = s.frame(0);
  CHECK(f0.color.width == 8);
  CHECK(f0.color.at(0, 0, 0) == 1.0);
  CHECK(f0.color.at(0, 0, 2) == 0.2);
  CHECK(f0.depth.at(3, 3) == 2.0);  // 13107 / 6553.5
  CHECK(f0.depth.at(7, 5) == 0.0);
  CHECK(s.frame(1).depth.at(0, 0) == 19661.0 / 6553.5);

  opt.depth_scale = 13107.0;
  CHECK(loadReplica(dataDir() / "replica_mini", opt).frame(0).depth.at(3, 3) == 1.0);

  const fs::path broken = testutil::tempDir("replica_broken");
  fs::copy(dataDir() / "replica_mini", broken, fs::copy_options::recursive);
  fs::remove(broken / "traj.txt");
  CHECK_THROWS_AS(loadReplica(broken, opt), FormatError);
  std::ofstream(broken / "traj.txt") << "1 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1\n";
  CHECK_THROWS_AS(loadReplica(broken, opt), FormatError);
}
