// Per-voxel projective fusion kernels.
//
// The *_serial variants sweep the whole grid in one thread and are kept as the
// reference. The *_parallel variants restrict the sweep to the camera frustum's
// bounding box and split z-slabs across OpenMP threads; they produce
// bit-identical voxels.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/parallel.hpp"
#include "objslam/tsdf_volume.hpp"

#include <cstddef>

namespace objslam {

/// Weighted-average TSDF update for every voxel that projects onto a valid
/// depth pixel with d - z > -mu. Returns the number of voxels updated.
std::size_t integrate_depth_serial(TsdfVolume& volume, const DepthImage& depth,
                                   const Pose& camera_pose, const Intrinsics& k);
std::size_t integrate_depth_parallel(TsdfVolume& volume, const DepthImage& depth,
                                     const Pose& camera_pose, const Intrinsics& k);

inline std::size_t integrate_depth(TsdfVolume& volume, const DepthImage& depth,
                                   const Pose& camera_pose, const Intrinsics& k,
                                   Execution exec) {
  return exec == Execution::Parallel
             ? integrate_depth_parallel(volume, depth, camera_pose, k)
             : integrate_depth_serial(volume, depth, camera_pose, k);
}

/// Beta-count update: F += M(u), N += 1 - M(u) for voxels inside the
/// truncation band |d - z| < mu. Returns the number of voxels touched.
std::size_t fuse_foreground_serial(TsdfVolume& volume, const Mask& mask,
                                   const DepthImage& depth, const Pose& camera_pose,
                                   const Intrinsics& k);
std::size_t fuse_foreground_parallel(TsdfVolume& volume, const Mask& mask,
                                     const DepthImage& depth,
                                     const Pose& camera_pose, const Intrinsics& k);

inline std::size_t fuse_foreground_counts(TsdfVolume& volume, const Mask& mask,
                                          const DepthImage& depth,
                                          const Pose& camera_pose,
                                          const Intrinsics& k, Execution exec) {
  return exec == Execution::Parallel
             ? fuse_foreground_parallel(volume, mask, depth, camera_pose, k)
             : fuse_foreground_serial(volume, mask, depth, camera_pose, k);
}

}  // namespace objslam
