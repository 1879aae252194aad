// The throw-away coarse TSDF used for local tracking and occlusion handling.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/parallel.hpp"
#include "objslam/tsdf_volume.hpp"

#include <cstddef>

namespace objslam {

struct BackgroundParams {
  int resolution = 256;
  double voxel_size = 0.02;       // metres
  double centre_offset = 2.56;    // metres along the camera z-axis
  double reset_distance = 1.28;   // metres, spherical threshold
  double truncation_factor = 4.0;
};

struct CoarseVolume {
  TsdfVolume volume;  // world-axis aligned at creation
  Vec3 centre = Vec3::Zero();
  Pose creation_pose;
};

/// Empty volume centred at camera_pose * (0, 0, offset).
CoarseVolume init_background(const Pose& camera_pose, const BackgroundParams& params = {});
/// Same, reusing the storage of `vol` (a reset).
void reset_background(CoarseVolume& vol, const Pose& camera_pose,
                      const BackgroundParams& params = {});

bool needs_reset(const CoarseVolume& vol, const Pose& camera_pose,
                 const BackgroundParams& params = {});

/// Ungated weighted-average fusion with mu = factor * voxel size.
std::size_t integrate_background(CoarseVolume& vol, const DepthImage& depth,
                                 const Pose& camera_pose, const Intrinsics& k, Execution exec);

/// Moves the whole volume rigidly: pose <- world_delta * pose. Used to keep
/// the local model consistent with an externally perturbed camera estimate.
void transform_background(CoarseVolume& vol, const Pose& world_delta);

}  // namespace objslam
