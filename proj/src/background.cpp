#include "objslam/background.hpp"

#include "objslam/fusion_kernels.hpp"

namespace objslam {

namespace {

Vec3 anchor(const Pose& camera_pose, const BackgroundParams& params) {
  return camera_pose * Vec3(0.0, 0.0, params.centre_offset);
}

}  // namespace

CoarseVolume init_background(const Pose& camera_pose, const BackgroundParams& params) {
  CoarseVolume vol;
  vol.volume.grid = VoxelGrid(params.resolution, params.voxel_size);
  reset_background(vol, camera_pose, params);
  return vol;
}

void reset_background(CoarseVolume& vol, const Pose& camera_pose,
                      const BackgroundParams& params) {
  if (vol.volume.grid.resolution() != params.resolution ||
      vol.volume.grid.voxel_size() != params.voxel_size) {
    vol.volume.grid = VoxelGrid(params.resolution, params.voxel_size);
  } else {
    vol.volume.grid.reset();
  }
  vol.centre = anchor(camera_pose, params);
  vol.volume.pose = Pose::from_translation(vol.centre);
  vol.volume.truncation_factor = params.truncation_factor;
  vol.creation_pose = camera_pose;
}

bool needs_reset(const CoarseVolume& vol, const Pose& camera_pose,
                 const BackgroundParams& params) {
  return (vol.centre - anchor(camera_pose, params)).norm() > params.reset_distance;
}

std::size_t integrate_background(CoarseVolume& vol, const DepthImage& depth,
                                 const Pose& camera_pose, const Intrinsics& k,
                                 Execution exec) {
  return integrate_depth(vol.volume, depth, camera_pose, k, exec);
}

void transform_background(CoarseVolume& vol, const Pose& world_delta) {
  vol.volume.pose = world_delta * vol.volume.pose;
  vol.centre = world_delta * vol.centre;
  vol.creation_pose = world_delta * vol.creation_pose;
}

}  // namespace objslam
