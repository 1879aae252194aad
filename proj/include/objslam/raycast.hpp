// Layered rendering: every object volume plus the coarse background volume
// composited by nearest foreground zero crossing.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/object_volume.hpp"
#include "objslam/parallel.hpp"
#include "objslam/tsdf_volume.hpp"

#include <map>
#include <span>

namespace objslam {

inline constexpr int kBackgroundIndex = 0;
inline constexpr int kNoHitIndex = -1;

struct RaycastParams {
  double min_range = 0.1;             // metres along the ray
  double max_range = 8.0;
  double refine_below_sdf = 0.8;      // halve the step once sdf drops below this
  double foreground_threshold = 0.5;  // strict
  double background_margin = 0.05;    // object hit may lie this far behind background
};

struct RenderedMaps {
  Intrinsics camera;
  Pose camera_pose;
  DepthImage depth;   // ray length, metres; 0 where invalid
  PointMap vertices;  // world frame
  PointMap normals;   // world frame, unit
  Image<int> index;   // object id, kBackgroundIndex or kNoHitIndex
  std::map<int, int> counts;  // pixels per index value (excluding no-hit)

  int valid_pixels() const;
};

/// One ray against one volume. Returns the ray length of the first accepted
/// positive-to-negative crossing in [t_near, t_far], if any.
struct RayHit {
  double t;
  Vec3 normal_world;
};
std::optional<RayHit> cast_ray(const TsdfVolume& volume, const Vec3& origin_world,
                               const Vec3& dir_world, double t_near, double t_far,
                               bool require_foreground, const RaycastParams& params);

RenderedMaps raycast_layered_serial(std::span<const ObjectVolume* const> objects,
                                    const TsdfVolume* background, const Pose& camera_pose,
                                    const Intrinsics& k, const RaycastParams& params = {});
RenderedMaps raycast_layered_parallel(std::span<const ObjectVolume* const> objects,
                                      const TsdfVolume* background, const Pose& camera_pose,
                                      const Intrinsics& k, const RaycastParams& params = {});

inline RenderedMaps raycast_layered(std::span<const ObjectVolume* const> objects,
                                    const TsdfVolume* background, const Pose& camera_pose,
                                    const Intrinsics& k, const RaycastParams& params,
                                    Execution exec) {
  return exec == Execution::Parallel
             ? raycast_layered_parallel(objects, background, camera_pose, k, params)
             : raycast_layered_serial(objects, background, camera_pose, k, params);
}

/// Binary mask per object id present in the index map (background excluded).
std::map<int, Mask> render_instance_masks(const RenderedMaps& maps);

/// Deterministic palette keyed by id; background grey, no-hit black.
Rgb instance_colour(int id);
RgbImage render_instance_colours(const RenderedMaps& maps);

}  // namespace objslam
