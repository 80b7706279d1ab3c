#include <doctest.h>

#include <array>
#include <atomic>
#include <fstream>
#include <limits>

#include "gsicp/cloud.hpp"
#include "gsicp/mapping.hpp"
#include "gsicp/synth.hpp"
#include "test_helpers.hpp"

using namespace gsicp;

namespace {

KeyframeMessage keyframeMessage(const SynthScene& scene, int index, int downsample = 4) {
  const Pose pose = scene.pathPose(index);
  const Frame f = scene.renderFrame(pose, index, index);
  KeyframeMessage msg;
  CloudConfig cc;
  msg.camera_cloud = buildCloud(f, cc);
  const CovarianceSet covs = knnCovariances(msg.camera_cloud, cc.knn);
  for (const Mat3& c : covs.covariances) {
    msg.regularized.push_back(ellipseDecomposition(decomposeCovariance(c)));
  }
  KeyframeRecord& r = msg.record;
  r.frame_index = index;
  r.kind = KeyframeKind::Tracking;
  r.camera_to_world = pose;
  r.intrinsics = f.intrinsics.downsampled(downsample);
  r.color = downsampleImage(f.color, downsample);
  r.depth = downsampleImage(f.depth, downsample, true);
  return msg;
}

RenderedFrame constantFrame(int w, int h, double c, double d) {
  RenderedFrame r;
  r.rgb = Image(w, h, 3, c);
  r.depth = Image(w, h, 1, d);
  r.alpha = Image(w, h, 1, 1.0);
  return r;
}

MappingConfig noPrune() {
  MappingConfig c;
  c.prune_enabled = false;
  return c;
}

InsertConfig toyInsert() {
  InsertConfig c;
  c.overlap_dist = 0.05;
  return c;
}

}  // namespace

TEST_CASE("map loss examples") {
  const RenderedFrame r = constantFrame(16, 12, 0.4, 2.0);
  const auto mask = validDepthMask(r.depth);

  const LossResult same = mapLoss(r, r.rgb, r.depth, LossWeights{}, mask);
  CHECK(same.loss == doctest::Approx(0.0).epsilon(1e-12));

  const Image off(16, 12, 3, 0.5);
  const LossResult l1 = mapLoss(r, off, r.depth, {1.0, 0.0, 0.0}, mask);
  CHECK(l1.loss == doctest::Approx(0.1).epsilon(1e-12));

  Image gt_depth(16, 12, 1, 2.2);
  gt_depth.at(3, 3) = 0.0;  // outside the mask
  gt_depth.at(4, 3) = std::numeric_limits<double>::quiet_NaN();
  const LossResult d = mapLoss(r, r.rgb, gt_depth, {0.0, 0.0, 1.0}, validDepthMask(gt_depth));
  CHECK(d.loss == doctest::Approx(0.2).epsilon(1e-12));
  CHECK_FALSE(d.depth_mask_empty);
  CHECK(d.d_depth.at(3, 3) == 0.0);

  const Image none(16, 12, 1, 0.0);
  const LossResult e = mapLoss(r, r.rgb, none, LossWeights{}, validDepthMask(none));
  CHECK(e.depth_mask_empty);
  CHECK(e.depth == 0.0);
}

TEST_CASE("map loss is non-negative and its gradient matches finite differences") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RenderedFrame r = constantFrame(14, 13, 0.0, 0.0);
  Image gt_rgb(14, 13, 3), gt_d(14, 13, 1);
  for (auto& v : r.rgb.data) v = u(rng);
  for (auto& v : r.depth.data) v = 1.0 + u(rng);
  for (auto& v : gt_rgb.data) v = u(rng);
  for (auto& v : gt_d.data) v = u(rng) < 0.2 ? 0.0 : 1.0 + u(rng);
  const auto mask = validDepthMask(gt_d);
  const LossWeights w;
  const LossResult base = mapLoss(r, gt_rgb, gt_d, w, mask);
  CHECK(base.loss >= 0.0);
  const double h = 1e-6;
  for (int k = 0; k < 25; ++k) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, r.rgb.data.size() - 1)(rng);
    RenderedFrame p = r, m = r;
    p.rgb.data[i] += h;
    m.rgb.data[i] -= h;
    const double fd = (mapLoss(p, gt_rgb, gt_d, w, mask).loss -
                       mapLoss(m, gt_rgb, gt_d, w, mask).loss) / (2 * h);
    CHECK(base.d_rgb.data[i] == doctest::Approx(fd).epsilon(1e-4));
  }
  for (int k = 0; k < 10; ++k) {
    const std::size_t i = std::uniform_int_distribution<std::size_t>(0, r.depth.data.size() - 1)(rng);
    RenderedFrame p = r, m = r;
    p.depth.data[i] += h;
    m.depth.data[i] -= h;
    const double fd = (mapLoss(p, gt_rgb, gt_d, w, mask).loss -
                       mapLoss(m, gt_rgb, gt_d, w, mask).loss) / (2 * h);
    CHECK(base.d_depth.data[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("training keyframe draws") {
  std::vector<KeyframeRecord> kfs(4);
  for (int i = 0; i < 4; ++i) kfs[i].frame_index = i;
  std::mt19937_64 rng(1);
  CHECK(pickTrainingKeyframe(std::span(kfs.data(), 1), rng).frame_index == 0);
  CHECK_THROWS(pickTrainingKeyframe(std::span<const KeyframeRecord>{}, rng));

  std::array<int, 4> counts{};
  for (int i = 0; i < 10000; ++i) ++counts[pickTrainingKeyframe(kfs, rng).frame_index];
  for (int c : counts) {
    CHECK(c >= 2000);
    CHECK(c <= 3000);
  }

  std::mt19937_64 a(42), b(42);
  for (int i = 0; i < 50; ++i) {
    CHECK(pickTrainingKeyframe(kfs, a).frame_index == pickTrainingKeyframe(kfs, b).frame_index);
  }
}

TEST_CASE("optimizer state follows insertions and compaction") {
  OptimizerState s;
  s.resize(3);
  s.m_means[1] = Vec3(1, 2, 3);
  s.steps[1] = 7;
  s.resize(5);
  CHECK(s.size() == 5);
  CHECK(s.steps[4] == 0);
  CHECK(s.m_means[4] == Vec3::Zero());
  s.compact({false, true, false, true, true});
  CHECK(s.size() == 3);
  CHECK(s.steps[0] == 7);
  CHECK(s.m_means[0] == Vec3(1, 2, 3));
  CHECK(s.v_opacity.size() == 3);
}

TEST_CASE("optimization reduces the loss on a single keyframe") {
  const SynthScene scene(SynthSpec::defaultScene());
  GaussianMap map;
  Mapper mapper(map, noPrune(), toyInsert(), 1);
  const int inserted = mapper.consume(keyframeMessage(scene, 0));
  CHECK(inserted > 0);
  CHECK(mapper.optimizerState().size() == map.size());
  const KeyframeRecord kf = mapper.keyframes().front();
  const double first = mapper.optimizeStep(kf).loss;
  double last = first;
  for (int i = 0; i < 199; ++i) last = mapper.optimizeStep(kf).loss;
  CHECK(last <= 0.5 * first);
  const GaussianSet p = map.params();
  for (const Vec4& q : p.rotations) CHECK(std::abs(q.norm() - 1.0) < 1e-9);
  CHECK(mapper.rejectedSteps() == 0);
}

TEST_CASE("a perfect render leaves the parameters unchanged") {
  const SynthScene scene(SynthSpec::defaultScene());
  GaussianMap map;
  Mapper mapper(map, noPrune(), toyInsert(), 1);
  KeyframeMessage msg = keyframeMessage(scene, 0);
  mapper.consume(msg);
  const GaussianSet before = map.params();
  KeyframeRecord target = mapper.keyframes().front();
  const RenderedFrame r = render(before, target.camera_to_world.inverse(), target.intrinsics,
                                 MappingConfig{}.render);
  target.color = r.rgb;
  target.depth = r.depth;
  mapper.optimizeStep(target);
  const GaussianSet after = map.params();
  for (std::size_t i = 0; i < before.size(); ++i) {
    CHECK((after.means[i] - before.means[i]).norm() == 0.0);
    CHECK((after.colors[i] - before.colors[i]).norm() == 0.0);
    CHECK(after.opacity_logits[i] == before.opacity_logits[i]);
    CHECK((after.log_scales[i] - before.log_scales[i]).norm() == 0.0);
  }
}

TEST_CASE("non-finite loss rejects the step without touching the map") {
  const SynthScene scene(SynthSpec::defaultScene());
  GaussianMap map;
  Mapper mapper(map, noPrune(), toyInsert(), 1);
  mapper.consume(keyframeMessage(scene, 0));
  KeyframeRecord bad = mapper.keyframes().front();
  bad.color.data[5] = std::numeric_limits<double>::quiet_NaN();
  const GaussianSet before = map.params();
  const std::uint64_t v = map.version();
  const StepStats s = mapper.optimizeStep(bad);
  CHECK(s.rejected);
  CHECK(mapper.rejectedSteps() == 1);
  const GaussianSet after = map.params();
  CHECK(after.means == before.means);
  CHECK(after.opacity_logits == before.opacity_logits);
  CHECK(mapper.optimizerState().steps == std::vector<int>(before.size(), 0));
  CHECK(map.version() >= v);
}

TEST_CASE("iterate runs the requested count, honours stop and never densifies") {
  const SynthScene scene(SynthSpec::defaultScene());
  GaussianMap map;
  MappingConfig cfg;
  cfg.prune_warmup = 5;
  cfg.prune_every = 5;
  Mapper mapper(map, cfg, toyInsert(), 1);
  mapper.consume(keyframeMessage(scene, 0));
  mapper.consume(keyframeMessage(scene, 20));
  std::size_t size = map.size();
  for (int round = 0; round < 4; ++round) {
    CHECK(mapper.iterate(10) == 10);
    CHECK(map.size() <= size);
    CHECK(mapper.optimizerState().size() == map.size());
    size = map.size();
  }
  CHECK(mapper.iterations() == 40);
  CHECK(mapper.lossHistory().size() == 40);

  std::atomic<bool> stop{true};
  CHECK(mapper.iterate(10, &stop) == 0);
  CHECK(mapper.iterations() == 40);

  const auto path = testutil::tempDir("losscsv") / "loss.csv";
  mapper.writeLossCsv(path.string());
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "iteration,loss,primitives");
}

TEST_CASE("random keyframe training is reproducible for a fixed seed") {
  const SynthScene scene(SynthSpec::defaultScene());
  GaussianMap a, b;
  Mapper ma(a, noPrune(), toyInsert(), 9), mb(b, noPrune(), toyInsert(), 9);
  for (int idx : {0, 10, 20}) {
    ma.consume(keyframeMessage(scene, idx));
    mb.consume(keyframeMessage(scene, idx));
  }
  ma.iterate(15);
  mb.iterate(15);
  CHECK(a.params().means == b.params().means);
  CHECK(a.params().colors == b.params().colors);
}
