#include "objslam/object_volume.hpp"

#include "objslam/fusion_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace objslam {

std::string to_string(InitRejection r) {
  switch (r) {
    case InitRejection::None: return "none";
    case InitRejection::EmptyCloud: return "empty-cloud";
    case InitRejection::TooFar: return "too-far";
    case InitRejection::Overlap: return "overlap";
  }
  return "unknown";
}

std::vector<Vec3> mask_point_cloud(const Mask& mask, const DepthImage& depth,
                                   const Pose& camera_pose, const Intrinsics& k,
                                   int erosion_radius) {
  if (!mask.same_shape(depth)) throw std::invalid_argument("mask/depth shape mismatch");
  const Mask eroded = erode(mask, erosion_radius);
  std::vector<Vec3> pts;
  for (int y = 0; y < eroded.height(); ++y) {
    for (int x = 0; x < eroded.width(); ++x) {
      if (!eroded(x, y)) continue;
      const float d = depth(x, y);
      if (!valid_depth(d)) continue;
      pts.push_back(camera_pose * k.backproject_unchecked(x, y, d));
    }
  }
  return pts;
}

Vec3 axis_percentile(std::span<const Vec3> points, double percent) {
  if (points.empty()) throw std::invalid_argument("percentile of an empty cloud");
  Vec3 out;
  std::vector<double> values(points.size());
  const double pos = percent / 100.0 * static_cast<double>(points.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, points.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < points.size(); ++i) values[i] = points[i][a];
    std::sort(values.begin(), values.end());
    out[a] = values[lo] + frac * (values[hi] - values[lo]);
  }
  return out;
}

CubeFit fit_cube(std::span<const Vec3> points, const ObjectParams& params) {
  const Vec3 p10 = axis_percentile(points, params.lower_percentile);
  const Vec3 p90 = axis_percentile(points, params.upper_percentile);
  double size = params.size_margin * (p90 - p10).cwiseAbs().maxCoeff();
  size = std::clamp(size, params.min_object_size, params.max_object_size);
  return {0.5 * (p10 + p90), size};
}

double aabb_iou(const std::pair<Vec3, Vec3>& a, const std::pair<Vec3, Vec3>& b) {
  const Vec3 lo = a.first.cwiseMax(b.first);
  const Vec3 hi = a.second.cwiseMin(b.second);
  const Vec3 ext = (hi - lo).cwiseMax(0.0);
  const double inter = ext.prod();
  const double va = (a.second - a.first).prod();
  const double vb = (b.second - b.first).prod();
  const double uni = va + vb - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

ObjectVolume make_volume(const CubeFit& cube, int resolution, const ObjectParams& params,
                         int id) {
  ObjectVolume vol;
  vol.id = id;
  vol.volume.pose = Pose::from_translation(cube.centre);
  vol.volume.grid = VoxelGrid(resolution, cube.size / resolution);
  vol.volume.truncation_factor = params.truncation_factor;
  return vol;
}

}  // namespace

InitOutcome init_object_from_cloud(std::span<const Vec3> world_points,
                                   const Vec3& camera_centre,
                                   std::span<const ObjectVolume* const> existing,
                                   const ObjectParams& params, int id) {
  if (world_points.empty()) return {std::nullopt, InitRejection::EmptyCloud};
  const CubeFit cube = fit_cube(world_points, params);
  if ((cube.centre - camera_centre).norm() > params.max_init_distance) {
    return {std::nullopt, InitRejection::TooFar};
  }
  const Vec3 half = Vec3::Constant(0.5 * cube.size);
  const std::pair<Vec3, Vec3> box{cube.centre - half, cube.centre + half};
  for (const ObjectVolume* other : existing) {
    if (aabb_iou(box, other->volume.world_aabb()) >= params.max_init_iou) {
      return {std::nullopt, InitRejection::Overlap};
    }
  }
  return {make_volume(cube, params.initial_resolution, params, id), InitRejection::None};
}

InitOutcome init_object(const Mask& mask, const DepthImage& depth,
                        const Pose& camera_pose, const Intrinsics& k,
                        std::span<const ObjectVolume* const> existing,
                        const ObjectParams& params, int id) {
  const auto cloud = mask_point_cloud(mask, depth, camera_pose, k, params.erosion_radius);
  return init_object_from_cloud(cloud, camera_pose.translation(), existing, params, id);
}

ResizeOutcome resize_object(ObjectVolume& object, std::span<const Vec3> mask_cloud,
                            std::span<const Vec3> render_cloud,
                            const ObjectParams& params) {
  std::vector<Vec3> world;
  world.reserve(mask_cloud.size() + render_cloud.size());
  world.insert(world.end(), mask_cloud.begin(), mask_cloud.end());
  world.insert(world.end(), render_cloud.begin(), render_cloud.end());
  if (world.empty()) return {};

  const Pose object_from_world = object.pose().inverse();
  std::vector<Vec3> local(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) local[i] = object_from_world * world[i];
  const CubeFit fit = fit_cube(local, params);

  const double v = object.voxel_size();
  const int r = object.resolution();
  const double half = 0.5 * r * v;
  const double tol = 1e-9;
  const Vec3 need_lo = fit.centre - Vec3::Constant(0.5 * fit.size);
  const Vec3 need_hi = fit.centre + Vec3::Constant(0.5 * fit.size);
  if ((need_lo.array() >= -half - tol).all() && (need_hi.array() <= half + tol).all()) {
    return {};
  }

  Eigen::Vector3i shift;
  for (int a = 0; a < 3; ++a) shift[a] = static_cast<int>(std::lround(fit.centre[a] / v));
  double needed = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double s = shift[a] * v;
    needed = std::max(needed, std::abs(fit.centre[a] - s) + 0.5 * fit.size);
    needed = std::max(needed, half + std::abs(s));
  }
  int new_r = 2 * static_cast<int>(std::ceil(needed / v - 1e-9));
  new_r = std::max(new_r, r);

  if (new_r > params.max_resolution) {
    // Start over "as though new" around the combined cloud; identity and
    // statistics stay with the object.
    CubeFit cube = fit_cube(world, params);
    ObjectVolume fresh = make_volume(cube, params.initial_resolution, params, object.id);
    ResizeOutcome out;
    out.kind = ResizeKind::Reinitialised;
    out.new_from_old = fresh.pose().inverse() * object.pose();
    object.volume = std::move(fresh.volume);
    return out;
  }
  if (new_r * v > params.max_object_size + tol) {
    int capped = static_cast<int>(std::floor(params.max_object_size / v + tol));
    capped -= capped % 2;
    if (capped <= r) return {};
    new_r = capped;
    shift.setZero();
  }

  VoxelGrid grown(new_r, v);
  const int offset = (new_r - r) / 2;
  const VoxelGrid& old = object.volume.grid;
  for (int kz = 0; kz < r; ++kz) {
    for (int j = 0; j < r; ++j) {
      for (int i = 0; i < r; ++i) {
        const int ni = i + offset - shift.x();
        const int nj = j + offset - shift.y();
        const int nk = kz + offset - shift.z();
        if (grown.contains(ni, nj, nk)) grown.at(ni, nj, nk) = old.at(i, j, kz);
      }
    }
  }
  const Vec3 shift_m = shift.cast<double>() * v;
  ResizeOutcome out;
  out.kind = ResizeKind::Grown;
  out.shift_voxels = shift;
  out.new_from_old = Pose::from_translation(-shift_m);
  object.volume.grid = std::move(grown);
  object.volume.pose = object.volume.pose * Pose::from_translation(shift_m);
  return out;
}

bool integration_gate_passes(const TargetQuality& quality, const IntegrationGate& gate) {
  return quality.valid_fraction >= gate.min_valid_fraction && quality.rmse < gate.max_rmse;
}

bool integrate_object(ObjectVolume& object, const DepthImage& depth,
                      const Pose& camera_pose, const Intrinsics& k,
                      const TargetQuality* gate_quality, const IntegrationGate& gate,
                      Execution exec) {
  if (gate_quality != nullptr && !integration_gate_passes(*gate_quality, gate)) {
    return false;
  }
  integrate_depth(object.volume, depth, camera_pose, k, exec);
  return true;
}

std::size_t fuse_foreground(ObjectVolume& object, const Mask& mask,
                            const DepthImage& depth, const Pose& camera_pose,
                            const Intrinsics& k, Execution exec) {
  return fuse_foreground_counts(object.volume, mask, depth, camera_pose, k, exec);
}

double foreground_probability(const Voxel& v) {
  return static_cast<double>(v.fg) / (static_cast<double>(v.fg) + v.bg);
}

double foreground_probability(const ObjectVolume& object, int i, int j, int k) {
  if (!object.volume.grid.contains(i, j, k)) {
    throw std::out_of_range("foreground_probability: voxel outside the grid");
  }
  return foreground_probability(object.volume.grid.at(i, j, k));
}

std::optional<double> foreground_probability_at(const ObjectVolume& object,
                                                const Vec3& world_point) {
  const VoxelGrid& grid = object.volume.grid;
  const Vec3 g = grid.to_grid(object.pose().inverse() * world_point);
  const int r = grid.resolution();
  const Vec3 f = g.array().floor();
  if ((f.array() < 0.0).any() || (f.array() >= r - 1).any()) return std::nullopt;
  const Vec3 t = g - f;
  const int x0 = static_cast<int>(f.x()), y0 = static_cast<int>(f.y()),
            z0 = static_cast<int>(f.z());
  double p = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int dx = c & 1, dy = (c >> 1) & 1, dz = (c >> 2) & 1;
    const double w = (dx ? t.x() : 1 - t.x()) * (dy ? t.y() : 1 - t.y()) *
                     (dz ? t.z() : 1 - t.z());
    p += w * foreground_probability(grid.at(x0 + dx, y0 + dy, z0 + dz));
  }
  return p;
}

ExistenceDecision update_existence(ObjectVolume& object, int visible_pixels,
                                   bool associated, const ExistenceParams& params) {
  if (visible_pixels > params.min_visible_pixels) {
    if (associated) {
      ++object.existence.exists;
    } else {
      ++object.existence.not_exists;
    }
  }
  return object.existence.expectation() < params.deletion_threshold
             ? ExistenceDecision::Delete
             : ExistenceDecision::Keep;
}

bool is_distribution(std::span<const double> dist, double tol) {
  if (dist.empty()) return false;
  double sum = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) return false;
    sum += p;
  }
  return std::abs(sum - 1.0) <= tol;
}

void fuse_semantics(ObjectVolume& object, std::span<const double> class_dist,
                    SemanticFusion mode) {
  if (!is_distribution(class_dist)) {
    throw std::invalid_argument("fuse_semantics: class distribution must sum to 1");
  }
  auto& cur = object.class_distribution;
  if (object.detection_count == 0 || cur.empty()) {
    cur.assign(class_dist.begin(), class_dist.end());
    object.detection_count = 1;
    return;
  }
  if (cur.size() != class_dist.size()) {
    throw std::invalid_argument("fuse_semantics: label count mismatch");
  }
  if (mode == SemanticFusion::Average) {
    const double k = object.detection_count + 1.0;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] += (class_dist[i] - cur[i]) / k;
    }
  } else {
    double z = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      cur[i] *= class_dist[i];
      z += cur[i];
    }
    if (!(z > 0.0)) {
      throw std::invalid_argument("fuse_semantics: product distribution vanished");
    }
    for (double& p : cur) p /= z;
  }
  ++object.detection_count;
}

}  // namespace objslam
