#include "objslam/tracking.hpp"

#include "test_support.hpp"
#include "tracking_fixtures.hpp"

#include <Eigen/Eigenvalues>
#include <doctest.h>

#include <numbers>

using namespace objslam;
using objslam::testing::analytic_frame;
using objslam::testing::analytic_render;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const SequenceSpec& small_loop() {
  static const SequenceSpec seq = loop_sequence("loop-small");
  return seq;
}

// Perturbation with exact magnitudes along random directions.
Pose perturbed(const Pose& p, std::mt19937_64& rng, double trans, double angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 dt = Vec3(n(rng), n(rng), n(rng)).normalized() * trans;
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  return Pose(so3_exp(axis * angle) * p.rotation(), p.translation() + dt);
}

PyramidLevel plane_level(const Intrinsics& k, float z) {
  PyramidLevel l;
  l.camera = k;
  l.depth = DepthImage(k.width, k.height, z);
  l.vertices = depth_to_vertices(l.depth, k);
  l.normals = vertices_to_normals(l.vertices);
  return l;
}

}  // namespace

TEST_CASE("constant-depth plane has normals facing the camera") {
  const Intrinsics k{100, 100, 31.5, 23.5, 64, 48};
  const auto pyr = preprocess_frame(DepthImage(64, 48, 1.25f), k);
  REQUIRE(pyr.levels.size() == 3);
  for (const auto& lvl : pyr.levels) {
    for (int y = 1; y + 1 < lvl.normals.height(); ++y) {
      for (int x = 1; x + 1 < lvl.normals.width(); ++x) {
        const Vec3& n = lvl.normals(x, y);
        REQUIRE(valid_point(n));
        CHECK((n - Vec3(0, 0, -1)).norm() < 1e-12);
      }
    }
    // Border pixels lack a neighbour on one side.
    CHECK_FALSE(valid_point(lvl.normals(0, 5)));
  }
}

TEST_CASE("an invalid pixel removes its vertex and its neighbours' normals") {
  const Intrinsics k{100, 100, 31.5, 23.5, 64, 48};
  DepthImage d(64, 48, 2.0f);
  d(20, 20) = 0.0f;
  const auto lvl = plane_level(k, 2.0f);
  const PointMap v = depth_to_vertices(d, k);
  const PointMap n = vertices_to_normals(v);
  CHECK_FALSE(valid_point(v(20, 20)));
  CHECK_FALSE(valid_point(n(19, 20)));
  CHECK_FALSE(valid_point(n(21, 20)));
  CHECK_FALSE(valid_point(n(20, 19)));
  CHECK_FALSE(valid_point(n(20, 21)));
  CHECK(valid_point(n(19, 19)));
  CHECK(valid_point(n(22, 20)));
  CHECK(valid_point(lvl.normals(20, 20)));
}

TEST_CASE("bilateral filter matches direct evaluation and leaves flat input alone") {
  const BilateralParams bp;
  SUBCASE("constant depth") {
    const DepthImage d(40, 32, 1.7f);
    const DepthImage f = bilateral_filter(d, bp);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(f[i] - d[i]) < 1e-6);
  }
  SUBCASE("random depth with holes") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 3.0);
    DepthImage d(24, 20);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (i % 7 == 0) ? 0.0f : float(u(rng));
    const DepthImage fs = bilateral_filter(d, bp, Execution::Serial);
    const DepthImage fp = bilateral_filter(d, bp, Execution::Parallel);
    CHECK(fs == fp);
    for (int y = 0; y < d.height(); ++y) {
      for (int x = 0; x < d.width(); ++x) {
        if (!valid_depth(d(x, y))) {
          CHECK(fs(x, y) == 0.0f);
          continue;
        }
        long double num = 0, den = 0;
        for (int yy = 0; yy < d.height(); ++yy) {
          for (int xx = 0; xx < d.width(); ++xx) {
            if (std::abs(xx - x) > 3 || std::abs(yy - y) > 3 || !valid_depth(d(xx, yy))) continue;
            const long double ds = (long double)(xx - x) * (xx - x) + (long double)(yy - y) * (yy - y);
            const long double dr = (long double)d(xx, yy) - d(x, y);
            const long double w = std::exp(-ds / 18.0L) * std::exp(-dr * dr / (2 * 0.03L * 0.03L));
            num += w * d(xx, yy);
            den += w;
          }
        }
        CHECK(std::abs(double(num / den) - fs(x, y)) < 1e-6);
      }
    }
  }
}

TEST_CASE("pyramid halves sizes and averages only valid depths") {
  DepthImage d(4, 4, 0.0f);
  d(0, 0) = 1.0f;
  d(1, 1) = 2.0f;
  d(2, 0) = 3.0f;
  const DepthImage h = downsample_depth(d);
  CHECK(h.width() == 2);
  CHECK(h(0, 0) == doctest::Approx(1.5));
  CHECK(h(1, 0) == 3.0f);
  CHECK(h(0, 1) == 0.0f);

  const Intrinsics k{100, 100, 31.5, 23.5, 64, 48};
  const auto pyr = preprocess_frame(DepthImage(64, 48, 1.0f), k);
  CHECK(pyr.levels[1].depth.width() == 32);
  CHECK(pyr.levels[2].depth.height() == 12);
  CHECK(pyr.levels[2].camera.cx == doctest::Approx(7.5));

  const Intrinsics odd{100, 100, 30.5, 23.5, 62, 48};
  CHECK_THROWS_AS(preprocess_frame(DepthImage(62, 48, 1.0f), odd), std::invalid_argument);
  CHECK_THROWS_AS(preprocess_frame(DepthImage(32, 48, 1.0f), k), std::invalid_argument);
}

TEST_CASE("point-to-plane Jacobian matches central differences") {
  const auto& seq = small_loop();
  const Intrinsics k = seq.camera;
  const Pose ref_pose = seq.trajectory.frame_pose(0);
  const RenderedMaps ref = analytic_render(seq.scene, ref_pose, k);
  const auto live = analytic_frame(seq.scene, seq.trajectory.frame_pose(3), k);
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> px(0, k.width - 1), py(0, k.height - 1);
  int tested = 0;
  while (tested < 100) {
    const int x = px(rng), y = py(rng);
    const Vec3& vl = live.levels[0].vertices(x, y);
    const Vec3& vr = ref.vertices(x, y);
    if (!valid_point(vl) || !valid_point(vr)) continue;
    const Vec3& nr = ref.normals(x, y);
    const Pose t = perturbed(ref_pose, rng, 0.05, 3 * kDeg);
    const auto term = point_to_plane(vl, t, vr, nr);
    Vec6 fd;
    const double h = 1e-6;
    for (int i = 0; i < 6; ++i) {
      Twist e = Twist::Zero();
      e[i] = h;
      fd[i] = (point_to_plane(vl, perturb_left(t, e), vr, nr).residual -
               point_to_plane(vl, perturb_left(t, -e), vr, nr).residual) /
              (2 * h);
    }
    CHECK((fd - term.jacobian).norm() / term.jacobian.norm() < 1e-4);
    ++tested;
  }
}

TEST_CASE("tracking against itself returns the initial pose") {
  const auto& seq = small_loop();
  const Pose pose = seq.trajectory.frame_pose(10);
  const RenderedMaps ref = analytic_render(seq.scene, pose, seq.camera);
  // An unfiltered pyramid reproduces the reference vertices exactly.
  const auto live = preprocess_frame(render_synth(seq.scene, pose, seq.camera).depth,
                                     seq.camera, BilateralParams{0, 3.0, 0.03});
  const auto res = icp_track(ref, live, pose);
  CHECK_FALSE(res.degenerate);
  CHECK((res.pose.translation() - pose.translation()).norm() < 1e-6);
  CHECK(rotation_angle_between(res.pose, pose) < 1e-6);
  CHECK(res.icp_rmse < 1e-6);
  CHECK(res.valid_fraction > 0.9);
  CHECK_FALSE(tracking_lost(res));
}

TEST_CASE("tracking recovers a 2 cm / 2 degree perturbation") {
  const auto& seq = small_loop();
  std::mt19937_64 rng(5);
  int ok = 0;
  const int trials = 20;
  for (int trial = 0; trial < trials; ++trial) {
    const Pose prev = seq.trajectory.frame_pose(trial * 13 % seq.trajectory.frame_count);
    const Pose truth = perturbed(prev, rng, 0.02, 2 * kDeg);
    const RenderedMaps ref = analytic_render(seq.scene, prev, seq.camera);
    const auto live = analytic_frame(seq.scene, truth, seq.camera);
    const auto res = icp_track(ref, live, prev);
    const double dt = (res.pose.translation() - truth.translation()).norm();
    const double dr = rotation_angle_between(res.pose, truth);
    if (dt < 0.002 && dr < 0.2 * kDeg && !res.degenerate) ++ok;
  }
  CHECK(ok >= trials - 1);
}

TEST_CASE("finest-level energy does not increase on noiseless frames") {
  const auto& seq = small_loop();
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    const Pose prev = seq.trajectory.frame_pose(40 * trial);
    const Pose truth = perturbed(prev, rng, 0.01, 1 * kDeg);
    const auto res = icp_track(analytic_render(seq.scene, prev, seq.camera),
                               analytic_frame(seq.scene, truth, seq.camera), prev);
    REQUIRE(res.energy.size() == 3);
    const auto& e = res.energy.back();
    REQUIRE(!e.empty());
    for (std::size_t i = 1; i < e.size(); ++i) CHECK(e[i] <= e[i - 1] + 1e-9);
    // The final partitioned pass sits at the last accepted pose.
    CHECK(res.total().sq_error <= e.back() + 1e-9);
    // Coarse levels do the bulk of the work: the first coarse energy is far above the end.
    CHECK(res.energy.front().front() > 2.0 * e.back());
  }
}

TEST_CASE("a single plane is degenerate") {
  SceneSpec scene;
  Primitive floor;
  floor.id = 1;
  floor.shape = Shape::Plane;
  floor.is_object = false;
  floor.label = "floor";
  scene.primitives.push_back(floor);
  const Intrinsics k = default_synth_camera();
  const Pose pose = look_at(Vec3(0.1, 0.2, 1.5), Vec3(0.1, 0.2, 0.0), Vec3::UnitY());
  const RenderedMaps ref = analytic_render(scene, pose, k);
  const auto live = analytic_frame(scene, pose, k);
  const auto refs = build_reference_pyramid(ref, 1);
  const LinearSystem sys = icp_reduce_serial(refs[0], pose, live.levels[0],
                                             Pose::from_translation(Vec3(0, 0, 0.01)) * pose, {});
  Eigen::SelfAdjointEigenSolver<Mat6> es(sys.jtj);
  const double top = es.eigenvalues()(5);
  int rank = 0;
  for (int i = 0; i < 6; ++i) rank += es.eigenvalues()(i) > 1e-9 * top;
  CHECK(rank == 3);
  CHECK(condition_number(sys.jtj) > 1e8);
  const auto res = icp_track(ref, live, pose);
  CHECK(res.degenerate);
  CHECK(tracking_lost(res));
}

TEST_CASE("serial and parallel reductions agree and partitions sum to the whole") {
  const auto& seq = small_loop();
  const Pose prev = seq.trajectory.frame_pose(60);
  const Pose cur = seq.trajectory.frame_pose(62);
  const RenderedMaps ref = analytic_render(seq.scene, prev, seq.camera);
  const auto live = analytic_frame(seq.scene, cur, seq.camera);
  const auto refs = build_reference_pyramid(ref, 3);
  for (int l = 0; l < 3; ++l) {
    const auto s = icp_reduce_serial(refs[l], prev, live.levels[l], prev, {});
    const auto p = icp_reduce_parallel(refs[l], prev, live.levels[l], prev, {});
    CHECK(s.residual_count == p.residual_count);
    CHECK((s.jtj - p.jtj).norm() <= 1e-9 * s.jtj.norm());
    CHECK((s.jtr - p.jtr).norm() <= 1e-9 * (1.0 + s.jtr.norm()));
  }
  const auto res = icp_track(ref, live, prev);
  REQUIRE(res.systems.size() > 2);
  const auto whole = icp_reduce_serial(refs[0], prev, live.levels[0], res.pose, {});
  const auto sum = res.total();
  CHECK(sum.residual_count == whole.residual_count);
  CHECK((sum.jtj - whole.jtj).norm() <= 1e-6 * whole.jtj.norm());
  CHECK((sum.jtr - whole.jtr).norm() <= 1e-6 * (1.0 + whole.jtr.norm()));
  int rendered = 0;
  for (const auto& [id, t] : res.systems) {
    CHECK(t.valid_count == t.system.residual_count);
    CHECK(t.valid_fraction() >= 0.0);
    CHECK(t.valid_fraction() <= 1.0);
    Eigen::SelfAdjointEigenSolver<Mat6> es(t.system.jtj);
    CHECK(es.eigenvalues()(0) >= -1e-9 * (1.0 + es.eigenvalues()(5)));
    CHECK((t.system.jtj - t.system.jtj.transpose()).norm() == 0.0);
    rendered += t.rendered_count;
  }
  CHECK(rendered == ref.valid_pixels());
  const auto q = tracking_quality(res);
  CHECK(q.size() == res.systems.size());
}

TEST_CASE("lost-tracking rule") {
  auto make = [](double rmse, double coverage, double valid) {
    TrackingResult r;
    r.icp_rmse = rmse;
    r.valid_fraction = valid;
    r.systems[kBackgroundIndex].rendered_count = int(std::lround(1000 * (1 - coverage)));
    r.systems[3].rendered_count = int(std::lround(1000 * coverage));
    return r;
  };
  CHECK(tracking_lost(make(0.06, 0.0, 1.0)));
  CHECK_FALSE(tracking_lost(make(0.01, 0.05, 0.2)));
  CHECK(tracking_lost(make(0.01, 0.4, 0.3)));
  CHECK_FALSE(tracking_lost(make(0.01, 0.4, 0.6)));
  CHECK_FALSE(tracking_lost(make(0.05, 0.1, 0.5)));
  auto d = make(0.0, 0.0, 1.0);
  d.degenerate = true;
  CHECK(tracking_lost(d));
}
