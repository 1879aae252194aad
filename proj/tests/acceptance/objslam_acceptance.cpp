// Acceptance run: one PASS/FAIL line per criterion, non-zero exit when any
// gating criterion fails. Criterion 12 runs only when OBJSLAM_TUM_DIR is set.

#include "fusion_fixtures.hpp"
#include "posegraph_oracle.hpp"
#include "reloc_fixtures.hpp"
#include "test_support.hpp"
#include "tracking_fixtures.hpp"

#include "objslam/association.hpp"
#include "objslam/mesh.hpp"
#include "objslam/pipeline.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <set>
#include <sstream>
#include <string>

using namespace objslam;
using namespace objslam::testing;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;
std::set<int> selected;  // empty: everything

void report(int n, const char* name, double limit_s, const std::function<Outcome()>& body) {
  if (!selected.empty() && !selected.count(n)) return;
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = limit_s <= 0.0 || s < limit_s;
  const bool pass = o.pass && in_time;
  if (!pass) ++failures;
  std::printf("criterion %2d %s: %s [%s; %.1f s%s]\n", n, pass ? "PASS" : "FAIL", name,
              o.detail.c_str(), s, in_time ? "" : fmt(" > %.0f s limit", limit_s).c_str());
  std::fflush(stdout);
}

double max_abs(const Mat4& m) { return m.cwiseAbs().maxCoeff(); }

Outcome manifold() {
  std::mt19937_64 rng(1);
  double exp_log = 0, ident = 0, homo = 0;
  for (int n = 0; n < 1000; ++n) {
    Twist z = random_twist(rng, 1.0, 0.8);
    while (z.tail<3>().norm() > 3.0) z = random_twist(rng, 1.0, 0.8);
    exp_log = std::max(exp_log, (se3_log(se3_exp(z)) - z).cwiseAbs().maxCoeff());
  }
  for (int n = 0; n < 1000; ++n) {
    const Pose p = random_pose(rng);
    const Twist z = random_twist(rng, 0.5, 0.5);
    ident = std::max(ident, max_abs(se3_exp(adjoint(p) * z).matrix() -
                                    (p * se3_exp(z) * p.inverse()).matrix()));
  }
  for (int n = 0; n < 1000; ++n) {
    const Pose p = random_pose(rng), q = random_pose(rng);
    homo = std::max(homo, (adjoint(p * q) - adjoint(p) * adjoint(q)).cwiseAbs().maxCoeff());
  }
  const double worst = std::max({exp_log, ident, homo});
  return {worst < 1e-9, fmt("max error exp/log %.1e, adjoint %.1e, homomorphism %.1e", exp_log,
                            ident, homo)};
}

const SequenceSpec& loop_small() {
  static const SequenceSpec seq = loop_sequence("loop-small");
  return seq;
}

Pose perturbed(const Pose& p, std::mt19937_64& rng, double trans, double angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Vec3 dt = Vec3(n(rng), n(rng), n(rng)).normalized() * trans;
  const Vec3 axis = Vec3(n(rng), n(rng), n(rng)).normalized();
  return Pose(so3_exp(axis * angle) * p.rotation(), p.translation() + dt);
}

Outcome icp_jacobian() {
  const auto& seq = loop_small();
  const Intrinsics k = seq.camera;
  const Pose ref_pose = seq.trajectory.frame_pose(0);
  const RenderedMaps ref = analytic_render(seq.scene, ref_pose, k);
  const auto live = analytic_frame(seq.scene, seq.trajectory.frame_pose(3), k);
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> px(0, k.width - 1), py(0, k.height - 1);
  double worst = 0;
  for (int tested = 0; tested < 100;) {
    const int x = px(rng), y = py(rng);
    const Vec3& vl = live.levels[0].vertices(x, y);
    const Vec3& vr = ref.vertices(x, y);
    if (!valid_point(vl) || !valid_point(vr)) continue;
    const Pose t = perturbed(ref_pose, rng, 0.05, 3 * kDeg);
    const auto term = point_to_plane(vl, t, vr, ref.normals(x, y));
    Vec6 fd;
    const double h = 1e-6;
    for (int i = 0; i < 6; ++i) {
      Twist e = Twist::Zero();
      e[i] = h;
      fd[i] = (point_to_plane(vl, perturb_left(t, e), vr, ref.normals(x, y)).residual -
               point_to_plane(vl, perturb_left(t, -e), vr, ref.normals(x, y)).residual) /
              (2 * h);
    }
    worst = std::max(worst, (fd - term.jacobian).norm() / term.jacobian.norm());
    ++tested;
  }
  return {worst < 1e-4, fmt("max relative error %.2e over 100 pixels", worst)};
}

Outcome icp_convergence() {
  const auto& seq = loop_small();
  std::mt19937_64 rng(3);
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Pose prev = seq.trajectory.frame_pose(trial * 7 % seq.trajectory.frame_count);
    const Pose truth = perturbed(prev, rng, 0.02, 2 * kDeg);
    const RenderedMaps ref = analytic_render(seq.scene, prev, seq.camera);
    const auto res = icp_track(ref, analytic_frame(seq.scene, truth, seq.camera), prev);
    const double dt = (res.pose.translation() - truth.translation()).norm();
    const double dr = rotation_angle_between(res.pose, truth);
    ok += dt < 0.002 && dr < 0.2 * kDeg && !res.degenerate;
  }
  return {ok >= 95, fmt("%d/100 trials within 2 mm and 0.2 deg", ok)};
}

Outcome tsdf_sphere() {
  const double radius = 0.3;
  SceneSpec scene;
  scene.label_set = {"ball"};
  scene.primitives.push_back(make_sphere(1, Vec3::Zero(), radius));
  const Intrinsics k = default_synth_camera();
  const ObjectVolume obj =
      fused_object(scene, 1, 1, Vec3::Zero(), 1.0, 64, views_around(Vec3::Zero(), 1.4, 20), k);
  const TriangleMesh mesh = extract_mesh(obj);
  if (mesh.vertices.empty()) return {false, "empty mesh"};
  double sq = 0.0;
  for (const auto& p : mesh.vertices) sq += std::pow(analytic_sdf(scene, p), 2);
  const double rms = std::sqrt(sq / mesh.vertices.size());
  return {rms < obj.voxel_size() / 2,
          fmt("RMS %.5f m vs v/2 = %.5f m over %zu vertices", rms, obj.voxel_size() / 2,
              mesh.vertices.size())};
}

Outcome beta_arithmetic() {
  Voxel v;
  const bool fg11 = foreground_probability(v) == 0.5;
  v.fg = 4;
  const bool fg41 = foreground_probability(v) == 0.8;
  ObjectVolume obj;
  const bool ex11 = obj.existence.expectation() == 0.5;
  obj.existence = {4, 1};
  const bool ex41 = obj.existence.expectation() == 0.8;
  // At exactly 0.1 the object survives; one more miss deletes it.
  ExistenceParams params;
  obj.existence = {1, 9};
  const bool keep = obj.existence.expectation() == 0.1 &&
                    update_existence(obj, 2501, true, params) == ExistenceDecision::Keep;
  obj.existence = {1, 9};
  const bool del = update_existence(obj, 2501, false, params) == ExistenceDecision::Delete &&
                   obj.existence.expectation() < 0.1;
  const bool all = fg11 && fg41 && ex11 && ex41 && keep && del;
  return {all, fmt("fg (1,1)=%d (4,1)=%d; existence (1,1)=%d (4,1)=%d; keep at 0.1=%d; "
                   "delete below 0.1=%d",
                   fg11, fg41, ex11, ex41, keep, del)};
}

Outcome memory() {
  const VoxelGrid fresh(64, 0.01);
  const bool grid_ok = fresh.bytes() == 2621440;

  SequenceSpec seq = loop_sequence("loop-tiny");
  seq.camera = seq.camera.level(1);
  RunOptions o;
  o.config.background = BackgroundParams{128, 0.04, 2.56, 1.28, 4.0};
  o.config.detection_cadence = 10;
  o.config.detection.border = 10;
  o.config.detection.min_area = 100;
  o.max_frames = 30;
  std::ostringstream stats;
  o.stats = &stats;
  run_synthetic(seq, o);
  std::size_t entries = 0, bad = 0;
  std::istringstream is(stats.str());
  for (std::string line; std::getline(is, line);) {
    const auto j = nlohmann::json::parse(line);
    for (const auto& m : j["object_memory"]) {
      const std::size_t r = m["resolution"].get<std::size_t>();
      bad += m["bytes"].get<std::size_t>() != r * r * r * 10;
      ++entries;
    }
  }
  return {grid_ok && entries > 0 && bad == 0,
          fmt("64^3 grid %zu bytes; %zu per-object log entries, %zu mismatches", fresh.bytes(),
              entries, bad)};
}

Mat6 random_information(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Mat6 a;
  for (int i = 0; i < 36; ++i) a(i) = n(rng);
  return scale * (a * a.transpose() / 6.0 + Mat6::Identity());
}

double pose_distance(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm() + rotation_angle_between(a, b);
}

Outcome pose_graph() {
  std::mt19937_64 rng(7);
  std::vector<Pose> truth{Pose()};
  for (int i = 1; i < 4; ++i) {
    truth.push_back(Pose(so3_exp(Vec3(0, 0, 1.5708 * i)), Vec3(i == 1 || i == 2, i >= 2, 0.0)));
  }
  PoseGraph g;
  for (int i = 0; i < 4; ++i) {
    g.add_camera_node(i, i == 0 ? truth[0] : perturb_right(truth[i], random_twist(rng, 0.05, 0.05)));
  }
  auto edge = [&](int a, int b, const Pose& extra) {
    const Pose z = truth[a].inverse() * truth[b] * se3_exp(random_twist(rng, 0.01, 0.01)) * extra;
    g.add_edge({camera_key(a), camera_key(b), z, random_information(rng, 100.0)});
  };
  edge(0, 1, Pose());
  edge(1, 2, Pose());
  edge(2, 3, Pose());
  edge(0, 3, Pose::from_translation(Vec3(0.3, -0.2, 0.1)));  // inconsistent closure

  const auto oracle = oracle_optimize(g);
  const auto rep = g.optimize();
  double state_gap = 0;
  for (std::size_t i = 0; i < 4; ++i) state_gap = std::max(state_gap, pose_distance(g.nodes()[i].state, oracle[i]));

  // Recentring an attached object must not change the total error.
  g.add_object_node(9, random_pose(rng));
  for (int c = 0; c < 4; ++c) {
    g.add_edge({object_key(9), camera_key(c), random_pose(rng), random_information(rng, 1.0)});
  }
  const double before = g.total_error();
  g.recentre_object(9, random_pose(rng));
  const double drift = std::abs(g.total_error() - before);

  const bool ok = rep.final_error < rep.initial_error && state_gap < 1e-6 && drift < 1e-9;
  return {ok, fmt("error %.4g -> %.4g; max state gap to oracle %.1e; recentring drift %.1e",
                  rep.initial_error, rep.final_error, state_gap, drift)};
}

Outcome ransac() {
  int ok = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto c = make_correspondences(seed, 200, 0.3);
    const auto r = ransac_rigid(c.src, c.dst, {200, 0.05, 50, seed});
    ok += r.pose && inlier_error(c, *r.pose) < 1e-6;
  }
  return {ok >= 99, fmt("%d/100 seeds within 1e-6 on inliers", ok)};
}

Mask rect(int w, int h, int x0, int y0, int x1, int y1) {
  Mask m(w, h, 0);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) m(x, y) = 1;
  return m;
}

Mask random_mask(std::mt19937_64& rng, int w, int h) {
  std::uniform_int_distribution<int> kind(0, 3), cx(0, w - 1), cy(0, h - 1), ext(1, 30);
  if (kind(rng) == 0) {
    Mask m(w, h, 0);
    std::bernoulli_distribution on(0.3);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = on(rng);
    return m;
  }
  const int x0 = cx(rng), y0 = cy(rng);
  return rect(w, h, x0, y0, std::min(w, x0 + ext(rng)), std::min(h, y0 + ext(rng)));
}

Outcome association() {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> nd(0, 6), no(0, 6), ids(1, 40);
  const int w = 64, h = 64;
  int mismatched = 0, decisions = 0;
  for (int config = 0; config < 500; ++config) {
    std::map<int, Mask> rendered;
    const int n_obj = no(rng);
    while (static_cast<int>(rendered.size()) < n_obj) rendered[ids(rng)] = random_mask(rng, w, h);
    if (!rendered.empty() && config % 5 == 0) rendered[41] = rendered.begin()->second;
    std::vector<Detection> dets;
    const int n_det = nd(rng);
    for (int i = 0; i < n_det; ++i) {
      Mask m = random_mask(rng, w, h);
      if (!rendered.empty() && i % 3 == 0) {
        auto it = rendered.begin();
        std::advance(it, static_cast<long>(rng() % rendered.size()));
        m = it->second;
        for (int k = 0; k < 50; ++k) m[rng() % m.size()] ^= 1;
      }
      dets.push_back({m, {1.0}, 0.9});
    }
    const auto res = associate(dets, rendered);
    if (res.assignment.size() != dets.size()) return {false, "assignment size mismatch"};
    for (std::size_t i = 0; i < dets.size(); ++i) {
      // Exact rational form of the overlap score: inter/area > 1/5.
      long area = 0;
      for (std::size_t p = 0; p < dets[i].mask.size(); ++p) area += dets[i].mask[p] != 0;
      int expect = -1;
      long best = -1;
      for (const auto& [id, mo] : rendered) {
        long inter = 0;
        for (std::size_t p = 0; p < mo.size(); ++p) inter += mo[p] != 0 && dets[i].mask[p] != 0;
        if (5 * inter > area && inter > best) {
          best = inter;
          expect = id;
        }
      }
      mismatched += res.assignment[i] != expect;
      ++decisions;
    }
  }
  return {mismatched == 0, fmt("%d/%d assignments differ from brute force", mismatched, decisions)};
}

// Criterion 10 fixture: loop-small, 2 mm / 0.1 deg per-frame odometry noise,
// ground-truth masks with 20% dropout. The seed is fixed up front.
constexpr std::uint64_t kLoopSeed = 7;

RunResult loop_run(bool masks) {
  RunOptions o;
  o.config.seed = kLoopSeed;
  o.use_masks = masks;
  SyntheticRunOptions s;
  s.odometry_noise = OdometryNoise{0.002, 0.1 * kDeg, kLoopSeed};
  s.corruption.dropout = 0.2;
  return run_synthetic(loop_small(), o, s);
}

std::string trajectory_bytes(const RunResult& r) {
  std::ostringstream os;
  write_trajectory(os, r.trajectory);
  return os.str();
}

}  // namespace

// Optional arguments restrict the run to the listed criteria (11 needs 10).
int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  report(1, "manifold exp/log and adjoint identities", 5, manifold);
  report(2, "ICP Jacobian vs central differences", 10, icp_jacobian);
  report(3, "ICP convergence from 2 cm + 2 deg", 60, icp_convergence);
  report(4, "TSDF sphere mesh accuracy", 60, tsdf_sphere);
  report(5, "foreground/existence beta arithmetic", 0, beta_arithmetic);
  report(6, "memory accounting", 0, memory);
  report(7, "pose graph loop vs brute-force oracle", 10, pose_graph);
  report(8, "RANSAC with 30% outliers", 30, ransac);
  report(9, "association vs brute force", 0, association);

  std::string first_trajectory;
  report(10, "loop-small closure improves on coarse odometry", 600, [&]() -> Outcome {
    const RunResult full = loop_run(true);
    const RunResult base = loop_run(false);
    if (full.status != RunStatus::Completed || base.status != RunStatus::Completed) {
      return {false, "run did not complete"};
    }
    first_trajectory = trajectory_bytes(full);
    const double a = ate_rmse(full.trajectory, *full.groundtruth);
    const double b = ate_rmse(base.trajectory, *base.groundtruth);
    const double gain = 1.0 - a / b;
    return {gain >= 0.30, fmt("ATE %.4f m vs baseline %.4f m, %.1f%% lower (need 30%%), %zu objects",
                              a, b, 100.0 * gain, full.objects.size())};
  });
  report(11, "determinism of the loop-small run", 0, [&]() -> Outcome {
    const std::string again = trajectory_bytes(loop_run(true));
    const bool same = !first_trajectory.empty() && again == first_trajectory;
    return {same, fmt("%zu trajectory bytes, %s", again.size(), same ? "identical" : "differ")};
  });

  if (!selected.empty() && !selected.count(12)) {
  } else if (const char* dir = std::getenv("OBJSLAM_TUM_DIR")) {
    // Optional: precomputed masks from OBJSLAM_TUM_MASKS; does not gate the exit code.
    const int gating = failures;
    report(12, "TUM sequence with precomputed masks (optional)", 0, [&]() -> Outcome {
      const char* masks = std::getenv("OBJSLAM_TUM_MASKS");
      RunOptions o;
      const RunResult r = run_tum(dir, Intrinsics{525.0, 525.0, 319.5, 239.5, 640, 480}, o,
                                  masks ? std::optional<std::filesystem::path>(masks) : std::nullopt);
      if (!r.groundtruth) return {r.status == RunStatus::Completed, "no ground truth to score"};
      return {r.status == RunStatus::Completed,
              fmt("%d frames, ATE %.4f m", r.frames, ate_rmse(r.trajectory, *r.groundtruth))};
    });
    failures = gating;
  } else {
    std::printf("criterion 12 SKIP: TUM sequence (set OBJSLAM_TUM_DIR and OBJSLAM_TUM_MASKS)\n");
  }
  return failures == 0 ? 0 : 1;
}
