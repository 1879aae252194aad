// Volumes fused from noiseless synthetic renders, shared by several tests.
#pragma once

#include "objslam/fusion_kernels.hpp"
#include "objslam/object_volume.hpp"
#include "objslam/synthworld.hpp"

#include <numbers>
#include <vector>

namespace objslam::testing {

inline std::vector<Pose> views_around(const Vec3& centre, double distance, int count,
                                      double z_span = 0.9) {
  std::vector<Pose> out;
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int n = 0; n < count; ++n) {
    const double z = z_span - 2.0 * z_span * (n + 0.5) / count;
    const double r = std::sqrt(1.0 - z * z);
    const Vec3 dir(r * std::cos(golden * n), r * std::sin(golden * n), z);
    out.push_back(look_at(centre + distance * dir, centre));
  }
  return out;
}

inline Mask index_mask(const InstanceImage& index, int id) {
  Mask m(index.width(), index.height(), 0);
  for (std::size_t i = 0; i < index.size(); ++i) m[i] = index[i] == id ? 1 : 0;
  return m;
}

/// Cube volume of edge `size` at `centre`, fused from `views` of `scene` with
/// the ground-truth mask of primitive `prim_id`.
inline ObjectVolume fused_object(const SceneSpec& scene, int prim_id, int object_id,
                                 const Vec3& centre, double size, int resolution,
                                 const std::vector<Pose>& views, const Intrinsics& k,
                                 bool fuse_mask = true) {
  ObjectVolume obj;
  obj.id = object_id;
  obj.volume.pose = Pose::from_translation(centre);
  obj.volume.grid = VoxelGrid(resolution, size / resolution);
  for (const auto& pose : views) {
    const auto f = render_synth(scene, pose, k);
    integrate_depth_parallel(obj.volume, f.depth, pose, k);
    if (fuse_mask) {
      fuse_foreground_parallel(obj.volume, index_mask(f.index, prim_id), f.depth, pose, k);
    }
  }
  return obj;
}

inline Primitive make_sphere(int id, const Vec3& centre, double r, const std::string& label = "ball") {
  Primitive p;
  p.id = id;
  p.shape = Shape::Sphere;
  p.pose = Pose::from_translation(centre);
  p.dims = Vec3(r, r, r);
  p.label = label;
  return p;
}

inline Primitive make_box(int id, const Pose& pose, const Vec3& half, const std::string& label = "box") {
  Primitive p;
  p.id = id;
  p.shape = Shape::Box;
  p.pose = pose;
  p.dims = half;
  p.label = label;
  return p;
}

inline Primitive make_floor(int id) {
  Primitive p;
  p.id = id;
  p.shape = Shape::Plane;
  p.is_object = false;
  p.label = "floor";
  return p;
}

}  // namespace objslam::testing
