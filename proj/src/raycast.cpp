#include "objslam/raycast.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace objslam {

int RenderedMaps::valid_pixels() const {
  int n = 0;
  for (const auto& [id, c] : counts) n += c;
  return n;
}

namespace {

// Slab test against the cube [-h, h]^3 in the volume frame.
bool clip_to_cube(const Vec3& o, const Vec3& d, double h, double& t0, double& t1) {
  for (int a = 0; a < 3; ++a) {
    if (d[a] == 0.0) {
      if (o[a] < -h || o[a] > h) return false;
      continue;
    }
    double ta = (-h - o[a]) / d[a];
    double tb = (h - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
  }
  return t0 <= t1;
}

std::optional<Vec3> sdf_gradient(const VoxelGrid& grid, const Vec3& p) {
  const double v = grid.voxel_size();
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = v;
    const auto hi = sample_trilinear(grid, p + e, false);
    const auto lo = sample_trilinear(grid, p - e, false);
    if (!hi || !lo) return std::nullopt;
    g[a] = hi->sdf - lo->sdf;
  }
  const double n = g.norm();
  if (!(n > 0.0)) return std::nullopt;
  return Vec3(g / n);
}

}  // namespace

namespace {

// Ray parameter up to which og + t dg stays in the interior of an unobserved
// brick (where every trilinear sample misses); t itself when not in one.
double unobserved_exit(const VoxelGrid& grid, const Vec3& og, const Vec3& dg, double t) {
  constexpr int B = 1 << VoxelGrid::kBrickShift;
  constexpr double eps = 1e-6;  // grid units; dwarfs rounding in og + t dg
  const Vec3 g = og + t * dg;
  int b[3];
  for (int a = 0; a < 3; ++a) {
    if (!(g[a] >= 0.0) || g[a] >= grid.resolution() - 1) return t;
    b[a] = static_cast<int>(g[a]) >> VoxelGrid::kBrickShift;
  }
  double lo[3], hi[3];
  for (int a = 0; a < 3; ++a) {
    lo[a] = b[a] * B + eps;
    hi[a] = b[a] * B + (B - 1) - eps;  // corners x0, x0 + 1 stay in the brick
    if (g[a] < lo[a] || g[a] > hi[a]) return t;
  }
  if (grid.block_may_be_observed(b[0] * B, b[1] * B, b[2] * B)) return t;
  double exit = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (dg[a] > 0.0) exit = std::min(exit, (hi[a] - og[a]) / dg[a]);
    if (dg[a] < 0.0) exit = std::min(exit, (lo[a] - og[a]) / dg[a]);
  }
  return exit;
}

}  // namespace

std::optional<RayHit> cast_ray(const TsdfVolume& volume, const Vec3& origin_world,
                               const Vec3& dir_world, double t_near, double t_far,
                               bool require_foreground, const RaycastParams& params) {
  const VoxelGrid& grid = volume.grid;
  const Pose inv = volume.pose.inverse();
  const Vec3 o = inv * origin_world;
  const Vec3 d = inv.rotate(dir_world);
  double t0 = t_near;
  double t1 = t_far;
  if (!clip_to_cube(o, d, 0.5 * grid.edge_length(), t0, t1)) return std::nullopt;

  const double v = grid.voxel_size();
  // March in grid units to avoid a division per sample.
  const Vec3 og = grid.to_grid(o);
  const Vec3 dg = d / v;
  double t_prev = 0.0;
  double s_prev = 0.0;
  bool have_prev = false;
  for (double t = t0; t <= t1;) {
    const auto s = sample_trilinear_grid(grid, og + t * dg, false);
    if (!s) {
      have_prev = false;
      const double t_stop = grid.bricks_current() ? unobserved_exit(grid, og, dg, t) : t;
      // Samples before t_stop all miss; step over them exactly as the loop would.
      do {
        t += v;
      } while (t < t_stop && t <= t1);
      continue;
    }
    if (have_prev && s_prev > 0.0 && s->sdf < 0.0) {
      const double th = t_prev + (t - t_prev) * s_prev / (s_prev - s->sdf);
      const Vec3 ph = o + th * d;
      bool accept = true;
      if (require_foreground) {
        const auto f = sample_trilinear(grid, ph, true);
        accept = f && f->foreground > params.foreground_threshold;
      }
      if (accept) {
        if (const auto n = sdf_gradient(grid, ph)) {
          return RayHit{th, volume.pose.rotate(*n)};
        }
      }
    }
    t_prev = t;
    s_prev = s->sdf;
    have_prev = true;
    t += (s->sdf < params.refine_below_sdf) ? 0.5 * v : v;
  }
  return std::nullopt;
}

namespace {

void render_row(int y, std::span<const ObjectVolume* const> objects, const TsdfVolume* background,
                const Pose& camera_pose, const Intrinsics& k, const RaycastParams& params,
                RenderedMaps& out) {
  const Vec3 origin = camera_pose.translation();
  for (int x = 0; x < k.width; ++x) {
    const Vec3 dir = camera_pose.rotate(k.backproject_unchecked(x, y, 1.0).normalized());
    double best = std::numeric_limits<double>::infinity();
    int best_id = kNoHitIndex;
    Vec3 best_n = Vec3::Zero();

    double object_limit = params.max_range;
    std::optional<RayHit> bg;
    if (background != nullptr) {
      bg = cast_ray(*background, origin, dir, params.min_range, params.max_range, false, params);
      if (bg) object_limit = std::min(object_limit, bg->t + params.background_margin);
    }
    for (const ObjectVolume* obj : objects) {
      const double limit = std::min(object_limit, best);
      const auto h = cast_ray(obj->volume, origin, dir, params.min_range, limit, true, params);
      // Strict '<' keeps the earlier (lower index) volume on exact ties.
      if (h && h->t < best) {
        best = h->t;
        best_id = obj->id;
        best_n = h->normal_world;
      }
    }
    if (best_id == kNoHitIndex && bg) {
      best = bg->t;
      best_id = kBackgroundIndex;
      best_n = bg->normal_world;
    }
    if (best_id == kNoHitIndex) continue;
    out.depth(x, y) = static_cast<float>(best);
    out.vertices(x, y) = origin + best * dir;
    out.normals(x, y) = best_n;
    out.index(x, y) = best_id;
  }
}

RenderedMaps raycast_impl(std::span<const ObjectVolume* const> objects,
                          const TsdfVolume* background, const Pose& camera_pose,
                          const Intrinsics& k, const RaycastParams& params, Execution exec) {
  k.validate();
  RenderedMaps out;
  out.camera = k;
  out.camera_pose = camera_pose;
  out.depth = DepthImage(k.width, k.height, 0.0f);
  out.vertices = PointMap(k.width, k.height, invalid_point());
  out.normals = PointMap(k.width, k.height, invalid_point());
  out.index = Image<int>(k.width, k.height, kNoHitIndex);
  if (background) background->grid.refresh_bricks();
  for (const ObjectVolume* o : objects) o->volume.grid.refresh_bricks();
  for_each_index(k.height, exec, [&](int y) {
    render_row(y, objects, background, camera_pose, k, params, out);
  });
  for (int id : out.index.values()) {
    if (id != kNoHitIndex) ++out.counts[id];
  }
  return out;
}

}  // namespace

RenderedMaps raycast_layered_serial(std::span<const ObjectVolume* const> objects,
                                    const TsdfVolume* background, const Pose& camera_pose,
                                    const Intrinsics& k, const RaycastParams& params) {
  return raycast_impl(objects, background, camera_pose, k, params, Execution::Serial);
}

RenderedMaps raycast_layered_parallel(std::span<const ObjectVolume* const> objects,
                                      const TsdfVolume* background, const Pose& camera_pose,
                                      const Intrinsics& k, const RaycastParams& params) {
  return raycast_impl(objects, background, camera_pose, k, params, Execution::Parallel);
}

std::map<int, Mask> render_instance_masks(const RenderedMaps& maps) {
  std::map<int, Mask> out;
  const int w = maps.index.width();
  const int h = maps.index.height();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int id = maps.index(x, y);
      if (id <= kBackgroundIndex) continue;
      auto it = out.find(id);
      if (it == out.end()) it = out.emplace(id, Mask(w, h, 0)).first;
      it->second(x, y) = 1;
    }
  }
  return out;
}

Rgb instance_colour(int id) {
  if (id == kNoHitIndex) return {0, 0, 0};
  if (id == kBackgroundIndex) return {128, 128, 128};
  // Golden-ratio hue walk gives well separated colours for nearby ids.
  const double hue = std::fmod(0.13 + 0.618033988749895 * id, 1.0) * 6.0;
  const int sector = static_cast<int>(hue);
  const double f = hue - sector;
  const double v = 230.0, s = 0.75;
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  double r = v, g = t, b = p;
  switch (sector) {
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
    default: break;
  }
  return {static_cast<std::uint8_t>(r), static_cast<std::uint8_t>(g),
          static_cast<std::uint8_t>(b)};
}

RgbImage render_instance_colours(const RenderedMaps& maps) {
  RgbImage out(maps.index.width(), maps.index.height());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = instance_colour(maps.index[i]);
  return out;
}

}  // namespace objslam
