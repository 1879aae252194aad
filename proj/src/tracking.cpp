#include "objslam/tracking.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace objslam {

DepthImage bilateral_filter(const DepthImage& depth, const BilateralParams& params,
                            Execution exec) {
  const int w = depth.width();
  const int h = depth.height();
  const int r = params.radius;
  std::vector<double> spatial;
  spatial.reserve(static_cast<std::size_t>((2 * r + 1) * (2 * r + 1)));
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      spatial.push_back(std::exp(-(dx * dx + dy * dy) /
                                 (2.0 * params.sigma_space * params.sigma_space)));
    }
  }
  const double inv_range = 1.0 / (2.0 * params.sigma_range * params.sigma_range);
  DepthImage out(w, h, 0.0f);
  for_each_index(h, exec, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const float dc = depth(x, y);
      if (!valid_depth(dc)) continue;
      double num = 0.0, den = 0.0;
      std::size_t s = 0;
      for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx, ++s) {
          const int xx = x + dx, yy = y + dy;
          if (!depth.in_bounds(xx, yy)) continue;
          const float d = depth(xx, yy);
          if (!valid_depth(d)) continue;
          const double diff = static_cast<double>(d) - dc;
          const double wt = spatial[s] * std::exp(-diff * diff * inv_range);
          num += wt * d;
          den += wt;
        }
      }
      out(x, y) = static_cast<float>(num / den);
    }
  });
  return out;
}

DepthImage downsample_depth(const DepthImage& depth) {
  DepthImage out(depth.width() / 2, depth.height() / 2, 0.0f);
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      double sum = 0.0;
      int n = 0;
      for (int k = 0; k < 4; ++k) {
        const float d = depth(2 * x + (k & 1), 2 * y + (k >> 1));
        if (valid_depth(d)) {
          sum += d;
          ++n;
        }
      }
      if (n > 0) out(x, y) = static_cast<float>(sum / n);
    }
  }
  return out;
}

PointMap depth_to_vertices(const DepthImage& depth, const Intrinsics& k) {
  PointMap out(depth.width(), depth.height(), invalid_point());
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const float d = depth(x, y);
      if (valid_depth(d)) out(x, y) = k.backproject_unchecked(x, y, d);
    }
  }
  return out;
}

PointMap vertices_to_normals(const PointMap& v) {
  PointMap out(v.width(), v.height(), invalid_point());
  for (int y = 1; y + 1 < v.height(); ++y) {
    for (int x = 1; x + 1 < v.width(); ++x) {
      const Vec3& c = v(x, y);
      const Vec3& l = v(x - 1, y);
      const Vec3& r = v(x + 1, y);
      const Vec3& u = v(x, y - 1);
      const Vec3& d = v(x, y + 1);
      if (!valid_point(c) || !valid_point(l) || !valid_point(r) || !valid_point(u) ||
          !valid_point(d)) {
        continue;
      }
      Vec3 n = (r - l).cross(d - u);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      if (n.dot(c) > 0.0) n = -n;
      out(x, y) = n;
    }
  }
  return out;
}

FramePyramid preprocess_frame(const DepthImage& depth, const Intrinsics& k,
                              const BilateralParams& filter, int levels, Execution exec) {
  k.validate();
  if (levels < 1) throw std::invalid_argument("pyramid needs at least one level");
  if (!depth.same_shape(k.width, k.height)) {
    throw std::invalid_argument("depth image does not match the intrinsics");
  }
  const int div = 1 << (levels - 1);
  if (k.width % div != 0 || k.height % div != 0) {
    throw std::invalid_argument("image size must be divisible by " + std::to_string(div));
  }
  FramePyramid out;
  DepthImage d = bilateral_filter(depth, filter, exec);
  for (int l = 0; l < levels; ++l) {
    if (l > 0) d = downsample_depth(d);
    PyramidLevel lvl;
    lvl.camera = k.level(l);
    lvl.vertices = depth_to_vertices(d, lvl.camera);
    lvl.normals = vertices_to_normals(lvl.vertices);
    lvl.depth = d;
    out.levels.push_back(std::move(lvl));
  }
  return out;
}

std::vector<ReferenceLevel> build_reference_pyramid(const RenderedMaps& maps, int levels) {
  std::vector<ReferenceLevel> out;
  out.push_back({maps.camera, maps.vertices, maps.normals});
  for (int l = 1; l < levels; ++l) {
    const ReferenceLevel& prev = out.back();
    ReferenceLevel next;
    next.camera = maps.camera.level(l);
    next.vertices = PointMap(prev.vertices.width() / 2, prev.vertices.height() / 2,
                             invalid_point());
    next.normals = next.vertices;
    for (int y = 0; y < next.vertices.height(); ++y) {
      for (int x = 0; x < next.vertices.width(); ++x) {
        Vec3 vs = Vec3::Zero(), ns = Vec3::Zero();
        bool ok = true;
        for (int k = 0; k < 4 && ok; ++k) {
          const int xx = 2 * x + (k & 1), yy = 2 * y + (k >> 1);
          const Vec3& v = prev.vertices(xx, yy);
          const Vec3& n = prev.normals(xx, yy);
          ok = valid_point(v) && valid_point(n);
          if (ok) {
            vs += v;
            ns += n;
          }
        }
        const double len = ns.norm();
        if (!ok || !(len > 1e-12)) continue;
        next.vertices(x, y) = 0.25 * vs;
        next.normals(x, y) = ns / len;
      }
    }
    out.push_back(std::move(next));
  }
  return out;
}

PointPlaneTerm point_to_plane(const Vec3& live_camera, const Pose& t_wc,
                              const Vec3& ref_vertex, const Vec3& ref_normal) {
  const Vec3 p = t_wc * live_camera;
  PointPlaneTerm term;
  term.residual = ref_normal.dot(ref_vertex - p);
  term.jacobian.head<3>() = -ref_normal;
  term.jacobian.tail<3>() = -p.cross(ref_normal);
  return term;
}

namespace {

// Projective association of one live pixel. Returns the reference pixel
// index, or -1 when the correspondence fails any validity test.
struct Association {
  long ref_index = -1;
  PointPlaneTerm term{};
};

Association associate(const ReferenceLevel& ref, const Pose& world_to_ref,
                      const Vec3& v_live, const Vec3& n_live, const Pose& t_wc,
                      const TrackingParams& params) {
  Association a;
  if (!valid_point(v_live) || !valid_point(n_live)) return a;
  const Vec3 p = t_wc * v_live;
  const Vec3 pr = world_to_ref * p;
  if (!(pr.z() > 0.0)) return a;
  const Vec2 u = ref.camera.project_unchecked(pr);
  const int x = static_cast<int>(std::floor(u.x() + 0.5));
  const int y = static_cast<int>(std::floor(u.y() + 0.5));
  if (!ref.vertices.in_bounds(x, y)) return a;
  const Vec3& vr = ref.vertices(x, y);
  const Vec3& nr = ref.normals(x, y);
  if (!valid_point(vr) || !valid_point(nr)) return a;
  if ((vr - p).norm() >= params.max_distance) return a;
  if (nr.dot(t_wc.rotate(n_live)) <= params.normal_threshold) return a;
  a.ref_index = static_cast<long>(y) * ref.vertices.width() + x;
  a.term = point_to_plane(v_live, t_wc, vr, nr);
  return a;
}

void reduce_row(int y, const ReferenceLevel& ref, const Pose& world_to_ref,
                const PyramidLevel& live, const Pose& t_wc, const TrackingParams& params,
                LinearSystem& sys) {
  for (int x = 0; x < live.vertices.width(); ++x) {
    const Association a =
        associate(ref, world_to_ref, live.vertices(x, y), live.normals(x, y), t_wc, params);
    if (a.ref_index >= 0) sys.add(a.term.jacobian, a.term.residual);
  }
}

}  // namespace

LinearSystem icp_reduce_serial(const ReferenceLevel& ref, const Pose& ref_pose,
                               const PyramidLevel& live, const Pose& t_wc,
                               const TrackingParams& params) {
  const Pose world_to_ref = ref_pose.inverse();
  LinearSystem sys;
  for (int y = 0; y < live.vertices.height(); ++y) {
    reduce_row(y, ref, world_to_ref, live, t_wc, params, sys);
  }
  return sys;
}

LinearSystem icp_reduce_parallel(const ReferenceLevel& ref, const Pose& ref_pose,
                                 const PyramidLevel& live, const Pose& t_wc,
                                 const TrackingParams& params) {
  const Pose world_to_ref = ref_pose.inverse();
  const int h = live.vertices.height();
  std::vector<LinearSystem> rows(static_cast<std::size_t>(h));
  for_each_index(h, Execution::Parallel, [&](int y) {
    reduce_row(y, ref, world_to_ref, live, t_wc, params, rows[y]);
  });
  LinearSystem sys;
  for (const auto& r : rows) sys += r;
  return sys;
}

std::map<int, TargetSystem> icp_partition(const RenderedMaps& ref, const PyramidLevel& live,
                                          const Pose& t_wc, const TrackingParams& params,
                                          Execution exec) {
  const ReferenceLevel level{ref.camera, ref.vertices, ref.normals};
  const Pose world_to_ref = ref.camera_pose.inverse();
  const int h = live.vertices.height();
  std::vector<std::map<int, LinearSystem>> rows(static_cast<std::size_t>(h));
  for_each_index(h, exec, [&](int y) {
    for (int x = 0; x < live.vertices.width(); ++x) {
      const Association a = associate(level, world_to_ref, live.vertices(x, y),
                                      live.normals(x, y), t_wc, params);
      if (a.ref_index < 0) continue;
      const int id = ref.index[static_cast<std::size_t>(a.ref_index)];
      rows[y][id].add(a.term.jacobian, a.term.residual);
    }
  });
  std::map<int, TargetSystem> out;
  for (const auto& [id, count] : ref.counts) out[id].rendered_count = count;
  for (const auto& row : rows) {
    for (const auto& [id, sys] : row) out[id].system += sys;
  }
  for (auto& [id, t] : out) t.valid_count = t.system.residual_count;
  return out;
}

double TargetSystem::valid_fraction() const {
  if (rendered_count <= 0) return 0.0;
  return std::min(1.0, static_cast<double>(valid_count) / rendered_count);
}

double TargetSystem::rmse() const {
  if (system.residual_count == 0) return 0.0;
  return std::sqrt(system.sq_error / system.residual_count);
}

LinearSystem TrackingResult::total() const {
  LinearSystem sum;
  for (const auto& [id, t] : systems) sum += t.system;
  return sum;
}

double TrackingResult::instance_coverage() const {
  long rendered = 0, instance = 0;
  for (const auto& [id, t] : systems) {
    rendered += t.rendered_count;
    if (id != kBackgroundIndex) instance += t.rendered_count;
  }
  return rendered > 0 ? static_cast<double>(instance) / rendered : 0.0;
}

double condition_number(const Mat6& jtj) {
  const Eigen::SelfAdjointEigenSolver<Mat6> es(jtj, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(5);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

TrackingResult icp_track(const RenderedMaps& ref, const FramePyramid& live, const Pose& init,
                         const TrackingParams& params, Execution exec) {
  if (static_cast<int>(live.levels.size()) < params.levels) {
    throw std::invalid_argument("frame pyramid has fewer levels than the tracker needs");
  }
  const auto refs = build_reference_pyramid(ref, params.levels);
  TrackingResult result;
  Pose t = init;
  Pose accepted = t;
  for (int l = params.levels - 1; l >= 0; --l) {
    std::vector<double> energy;
    for (int it = 0; it < params.iterations; ++it) {
      const LinearSystem sys = icp_reduce(refs[l], ref.camera_pose, live.levels[l], t, params, exec);
      // Re-association can make a step go uphill near the optimum; keep the
      // better pose and end the level instead of cycling.
      if (!energy.empty() && sys.sq_error > energy.back()) {
        t = accepted;
        break;
      }
      energy.push_back(sys.sq_error);
      accepted = t;
      if (sys.residual_count < 6 || condition_number(sys.jtj) > params.max_condition) {
        result.degenerate = true;
        continue;
      }
      const Vec6 zeta = sys.jtj.ldlt().solve(-sys.jtr);
      t = se3_exp(zeta) * t;
      t.normalize();
    }
    result.energy.push_back(std::move(energy));
  }
  result.systems = icp_partition(ref, live.levels[0], t, params, exec);
  const auto& last = result.energy.back();
  if (!last.empty() && result.total().sq_error > last.back()) {
    t = accepted;
    result.systems = icp_partition(ref, live.levels[0], t, params, exec);
  }
  result.pose = t;
  const LinearSystem sum = result.total();
  const int rendered = ref.valid_pixels();
  result.icp_rmse = sum.residual_count > 0 ? std::sqrt(sum.sq_error / sum.residual_count) : 0.0;
  result.valid_fraction =
      rendered > 0 ? std::min(1.0, static_cast<double>(sum.residual_count) / rendered) : 0.0;
  if (sum.residual_count < 6) result.degenerate = true;
  return result;
}

TrackingQuality tracking_quality(const TrackingResult& result) {
  TrackingQuality q;
  for (const auto& [id, t] : result.systems) q[id] = {t.valid_fraction(), t.rmse()};
  return q;
}

bool tracking_lost(const TrackingResult& result, const TrackingParams& params) {
  if (result.degenerate) return true;
  if (result.icp_rmse > params.lost_rmse) return true;
  return result.instance_coverage() >= params.lost_instance_coverage &&
         result.valid_fraction < params.lost_valid_fraction;
}

}  // namespace objslam
