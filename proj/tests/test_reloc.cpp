#include "objslam/reloc.hpp"

#include "reloc_fixtures.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

using namespace objslam;
using objslam::testing::inlier_error;
using objslam::testing::make_correspondences;
using objslam::testing::random_pose;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

double pose_gap(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm() + rotation_angle_between(a, b);
}

Keypoint kp(const Vec3& p, std::uint64_t id) {
  Keypoint k;
  k.point = p;
  k.pixel = Vec2::Zero();
  k.descriptor[0] = id;
  return k;
}

// Camera at distance 2 from the origin looking at it from azimuth `deg`.
Pose camera_at(double deg) {
  const double a = deg * kDeg;
  return look_at(Vec3(2 * std::cos(a), 2 * std::sin(a), 0.0), Vec3::Zero());
}

std::map<int, RelocObject> objects_from(const SceneSpec& scene) {
  std::map<int, RelocObject> out;
  for (const auto& p : scene.primitives) {
    if (!p.is_object) continue;
    std::vector<double> dist(scene.label_set.size(), 0.0);
    dist[static_cast<std::size_t>(scene.label_index(p.label))] = 1.0;
    out[p.id] = {p.pose, dist};
  }
  return out;
}

// Snapshot each object seen in `frame` using ground truth poses.
void snapshot_frame(SnapshotStore& store, const SequenceSpec& seq, const OracleFeatures& of,
                    int frame) {
  const SynthFrame f = render_sequence_frame(seq, frame);
  const auto kps = of.detect({frame, &f.rgb, &f.depth, seq.camera});
  const Pose t_wc = seq.trajectory.frame_pose(frame);
  for (const auto& [id, obj] : objects_from(seq.scene)) {
    std::vector<Keypoint> mine;
    for (const auto& k : kps) {
      if (static_cast<int>(k.descriptor[0] / 10000) == id) mine.push_back(k);
    }
    if (!mine.empty()) store.maybe_add(id, obj.t_wo, t_wc, mine, obj.class_dist);
  }
}

}  // namespace

TEST_CASE("rigid fit recovers known transforms") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vec3> src;
  for (int i = 0; i < 10; ++i) src.emplace_back(u(rng), u(rng), u(rng));
  CHECK(pose_gap(estimate_rigid_3d3d(src, src), Pose()) < 1e-12);
  for (int trial = 0; trial < 20; ++trial) {
    const Pose t = random_pose(rng, 2.0);
    std::vector<Vec3> dst;
    for (const auto& p : src) dst.push_back(t * p);
    const Pose est = estimate_rigid_3d3d(src, dst);
    CHECK((est.matrix() - t.matrix()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(est.rotation().determinant() == doctest::Approx(1.0));
  }
  SUBCASE("planar input with a mirrored target still yields a rotation") {
    std::vector<Vec3> flat, mirrored;
    for (int i = 0; i < 8; ++i) {
      flat.emplace_back(u(rng), u(rng), 0.0);
      mirrored.emplace_back(flat.back().x(), -flat.back().y(), 0.0);
    }
    CHECK(estimate_rigid_3d3d(flat, mirrored).rotation().determinant() == doctest::Approx(1.0));
  }
  SUBCASE("degenerate input is rejected") {
    const std::vector<Vec3> line{Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(2, 2, 2)};
    CHECK_THROWS_AS(estimate_rigid_3d3d(line, line), std::invalid_argument);
    CHECK_THROWS_AS(estimate_rigid_3d3d({Vec3::Zero(), Vec3::UnitX()}, {Vec3::Zero(), Vec3::UnitX()}),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_rigid_3d3d(src, {Vec3::Zero()}), std::invalid_argument);
    CHECK_FALSE(try_estimate_rigid_3d3d(line, line));
  }
}

TEST_CASE("RANSAC with 30% outliers recovers the exact transform") {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto c = make_correspondences(seed, 200, 0.3);
    const auto r = ransac_rigid(c.src, c.dst, {200, 0.05, 50, seed});
    if (r.pose && inlier_error(c, *r.pose) < 1e-6) ++ok;
    if (r.pose) {
      // Self-consistency: the reported inliers really are within threshold.
      for (int i : r.inliers) CHECK((*r.pose * c.src[i] - c.dst[i]).norm() < 0.05);
    }
  }
  CHECK(ok >= 99);
}

TEST_CASE("RANSAC success rate clears the binomial bound") {
  // One all-inlier triple per iteration has probability C(140,3)/C(200,3)
  // ~ 0.34, so 200 iterations fail with probability ~1e-36. Requiring 495 of
  // 500 leaves a wide margin for anything short of a bug.
  int ok = 0;
  for (std::uint64_t seed = 1000; seed < 1500; ++seed) {
    const auto c = make_correspondences(seed, 200, 0.3);
    const auto r = ransac_rigid(c.src, c.dst, {200, 0.02, 5, seed});
    ok += r.pose && inlier_error(c, *r.pose) < 1e-6;
  }
  CHECK(ok >= 495);
}

TEST_CASE("RANSAC is deterministic for a fixed seed") {
  const auto c = make_correspondences(77, 120, 0.5);
  const auto a = ransac_rigid(c.src, c.dst, {200, 0.02, 5, 9});
  const auto b = ransac_rigid(c.src, c.dst, {200, 0.02, 5, 9});
  REQUIRE(a.pose);
  CHECK(a.inliers == b.inliers);
  CHECK(a.pose->matrix() == b.pose->matrix());
}

TEST_CASE("snapshots need 15 degrees of view separation") {
  SnapshotStore store;
  const Pose t_wo = Pose::from_translation(Vec3(0.3, -0.1, 0.2));
  const Pose object_relative = t_wo.inverse();
  const std::vector<Keypoint> kps{kp(Vec3(0, 0, 2), 1), kp(Vec3(0.1, 0, 2), 2)};
  auto view = [&](double deg) { return t_wo * camera_at(deg); };
  CHECK(store.maybe_add(4, t_wo, view(0), kps, {1.0}));
  CHECK_FALSE(store.maybe_add(4, t_wo, view(10), kps, {1.0}));
  CHECK(store.maybe_add(4, t_wo, view(20), kps, {1.0}));
  CHECK_FALSE(store.maybe_add(4, t_wo, view(30), kps, {1.0}));
  CHECK(store.maybe_add(9, t_wo, view(10), kps, {1.0}));  // per object
  CHECK(store.snapshots(4).size() == 2);
  const Snapshot& s = store.snapshots(4)[0];
  CHECK((s.view_direction - Vec3(1, 0, 0)).norm() < 1e-12);
  // Stored in the object frame: camera point (0,0,2) is the object origin.
  CHECK((s.points[0] - Vec3::Zero()).norm() < 1e-12);
  (void)object_relative;

  SUBCASE("recentre moves the stored geometry") {
    const Pose shift = Pose::from_translation(Vec3(-0.05, 0.0, 0.0));
    store.recentre_object(4, shift);
    CHECK((store.snapshots(4)[0].points[0] - Vec3(-0.05, 0, 0)).norm() < 1e-12);
    store.remove_object(4);
    CHECK(store.snapshots(4).empty());
    CHECK(store.object_ids() == std::vector<int>{9});
  }
  SUBCASE("binary round trip") {
    std::stringstream ss;
    store.write(ss);
    const SnapshotStore back = SnapshotStore::read(ss);
    REQUIRE(back.size() == store.size());
    const auto& b = back.snapshots(4)[1];
    const auto& a = store.snapshots(4)[1];
    CHECK(b.points == a.points);
    CHECK(b.descriptors == a.descriptors);
    CHECK(b.view_direction == a.view_direction);
    CHECK(b.class_dist == a.class_dist);
    std::string bytes = ss.str();
    std::stringstream cut(bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(SnapshotStore::read(cut), std::runtime_error);
  }
}

TEST_CASE("relocalisation from oracle features on the synthetic loop") {
  const SequenceSpec seq = loop_sequence("loop-small");
  const OracleFeatures of(seq);
  SnapshotStore store;
  for (int frame : {0, 60, 120, 180, 240}) snapshot_frame(store, seq, of, frame);
  REQUIRE(store.size() > 0);
  const auto objects = objects_from(seq.scene);

  SUBCASE("exact re-observation") {
    const int frame = 120;
    const SynthFrame f = render_sequence_frame(seq, frame);
    const auto kps = of.detect({frame, &f.rgb, &f.depth, seq.camera});
    const auto r = relocalize(store, kps, objects, {}, of);
    REQUIRE(r.success());
    const Pose truth = seq.trajectory.frame_pose(frame);
    CHECK((r.camera_pose.translation() - truth.translation()).norm() < 1e-3);
    CHECK(rotation_angle_between(r.camera_pose, truth) < 0.1 * kDeg);
    CHECK(r.joint_inliers >= 50);
  }
  SUBCASE("an unseen viewpoint in between") {
    const int frame = 95;
    const SynthFrame f = render_sequence_frame(seq, frame);
    const auto r = relocalize(store, of.detect({frame, &f.rgb, &f.depth, seq.camera}), objects, {}, of);
    REQUIRE(r.success());
    const Pose truth = seq.trajectory.frame_pose(frame);
    CHECK((r.camera_pose.translation() - truth.translation()).norm() < 0.01);
  }
  SUBCASE("class gate") {
    const int frame = 120;
    const SynthFrame f = render_sequence_frame(seq, frame);
    const auto kps = of.detect({frame, &f.rgb, &f.depth, seq.camera});
    std::vector<double> none(seq.scene.label_set.size(), 0.0);
    none[0] = 0.3;
    none[1] = 0.7;
    const auto gated = relocalize(store, kps, objects, {std::vector<double>(none.size(), 0.0)}, of);
    CHECK(gated.failure == RelocFailure::NoCandidates);
  }
}

TEST_CASE("relocalisation failure reasons") {
  const OracleFeatures* unused = nullptr;
  (void)unused;
  struct Exact final : FeatureInterface {
    std::vector<Keypoint> detect(const FeatureFrame&) const override { return {}; }
    MatchList match(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b) const override {
      return match_exact(a, b);
    }
  } exact;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  const Pose t_wc = look_at(Vec3(2, 0, 0.5), Vec3::Zero());
  std::map<int, RelocObject> objects;
  SnapshotStore store;
  std::vector<Keypoint> frame;
  auto add_object = [&](int id, int points) {
    const Pose t_wo = Pose::from_translation(Vec3(0, 0.5 * id, 0));
    objects[id] = {t_wo, {1.0}};
    std::vector<Keypoint> kps;
    for (int i = 0; i < points; ++i) {
      const Vec3 world = t_wo * Vec3(u(rng), u(rng), u(rng));
      kps.push_back(kp(t_wc.inverse() * world, std::uint64_t(id) * 10000 + i));
    }
    store.maybe_add(id, t_wo, t_wc, kps, {1.0});
    frame.insert(frame.end(), kps.begin(), kps.end());
  };
  SUBCASE("no objects") {
    CHECK(relocalize(store, frame, objects, {}, exact).failure == RelocFailure::NoCandidates);
  }
  SUBCASE("four inliers per object") {
    add_object(1, 4);
    add_object(2, 4);
    CHECK(relocalize(store, frame, objects, {}, exact).failure == RelocFailure::PerObjectFail);
  }
  SUBCASE("objects match but too few joint inliers") {
    add_object(1, 20);
    add_object(2, 20);
    const auto r = relocalize(store, frame, objects, {}, exact);
    CHECK(r.failure == RelocFailure::JointFail);
    CHECK(r.matched_objects == std::vector<int>{1, 2});
    CHECK(r.joint_inliers == 40);
  }
  SUBCASE("enough points succeed exactly") {
    add_object(1, 30);
    add_object(2, 30);
    const auto r = relocalize(store, frame, objects, {{1.0}}, exact);
    REQUIRE(r.success());
    CHECK(pose_gap(r.camera_pose, t_wc) < 1e-9);
    CHECK(to_string(r.failure) == "ok");
  }
}

TEST_CASE("Harris/BRIEF features match across nearby views") {
  const SequenceSpec seq = loop_sequence("loop-small");
  const HarrisBrief hb;
  const SynthFrame a = render_sequence_frame(seq, 30);
  const SynthFrame b = render_sequence_frame(seq, 32);
  const auto ka = hb.detect({30, &a.rgb, &a.depth, seq.camera});
  const auto kb = hb.detect({32, &b.rgb, &b.depth, seq.camera});
  REQUIRE(ka.size() > 30);
  REQUIRE(kb.size() > 30);
  CHECK(hb.detect({30, &a.rgb, &a.depth, seq.camera}).size() == ka.size());
  std::vector<Descriptor> da, db;
  for (const auto& k : ka) da.push_back(k.descriptor);
  for (const auto& k : kb) db.push_back(k.descriptor);
  const auto matches = hb.match(da, db);
  REQUIRE(matches.size() > 15);
  // Ground-truth motion reprojects most matches onto their partner pixel; the
  // rest come from the periodic floor checker, which RANSAC must reject.
  const Pose b_from_a = seq.trajectory.frame_pose(32).inverse() * seq.trajectory.frame_pose(30);
  int good = 0;
  std::vector<Vec3> src, dst;
  for (const auto& [i, j] : matches) {
    good += (seq.camera.project_unchecked(b_from_a * ka[i].point) - kb[j].pixel).norm() < 2.0;
    src.push_back(ka[i].point);
    dst.push_back(kb[j].point);
  }
  CHECK(good >= 0.5 * matches.size());
  const auto r = ransac_rigid(src, dst, {200, 0.05, 10, 1});
  REQUIRE(r.pose);
  CHECK((r.pose->translation() - b_from_a.translation()).norm() < 0.02);
  CHECK(rotation_angle_between(*r.pose, b_from_a) < 1.0 * kDeg);
}

TEST_CASE("feature files round trip and report their path on errors") {
  const auto dir = std::filesystem::temp_directory_path() / "objslam_features_test";
  std::filesystem::create_directories(dir);
  const Intrinsics k{100, 100, 31.5, 23.5, 64, 48};
  const DepthImage depth(64, 48, 2.0f);
  std::vector<Keypoint> kps{kp(Vec3::Zero(), 0xabcdef0123ULL), kp(Vec3::Zero(), 7)};
  kps[0].pixel = Vec2(10.25, 12.5);
  kps[0].descriptor[3] = 0xffffffffffffffffULL;
  kps[1].pixel = Vec2(80, 5);  // off the image: dropped
  write_feature_file(dir / "3.txt", kps);
  const FileFeatures ff(dir);
  const auto back = ff.detect({3, nullptr, &depth, k});
  REQUIRE(back.size() == 1);
  CHECK(back[0].descriptor == kps[0].descriptor);
  CHECK((back[0].point - k.backproject_unchecked(10.25, 12.5, 2.0)).norm() < 1e-6);
  CHECK(ff.match({kps[0].descriptor}, {back[0].descriptor}).size() == 1);
  std::ofstream(dir / "4.txt") << "1 2 zz\n";
  try {
    (void)ff.detect({4, nullptr, &depth, k});
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("4.txt") != std::string::npos);
  }
  CHECK_THROWS_AS(ff.detect({5, nullptr, &depth, k}), std::runtime_error);
  std::filesystem::remove_all(dir);
}
