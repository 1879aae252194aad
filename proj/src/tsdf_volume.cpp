#include "objslam/tsdf_volume.hpp"

#include <atomic>

#include <algorithm>
#include <stdexcept>

namespace objslam {

VoxelGrid::VoxelGrid(int resolution, double voxel_size)
    : resolution_(resolution), voxel_size_(voxel_size) {
  if (resolution <= 0 || !(voxel_size > 0.0)) {
    throw std::invalid_argument("VoxelGrid: resolution and voxel size must be positive");
  }
  voxels_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, Voxel{});
  bricks_per_axis_ = (resolution + (1 << kBrickShift) - 1) >> kBrickShift;
  bricks_.assign(static_cast<std::size_t>(bricks_per_axis_) * bricks_per_axis_ * bricks_per_axis_, 0);
}

void VoxelGrid::reset() {
  std::fill(voxels_.begin(), voxels_.end(), Voxel{});
  std::fill(bricks_.begin(), bricks_.end(), 0);
  bricks_current_ = true;
}

void VoxelGrid::mark_observed(int i, int j, int k) {
  const std::size_t b =
      (static_cast<std::size_t>(k >> kBrickShift) * bricks_per_axis_ + (j >> kBrickShift)) *
          bricks_per_axis_ +
      (i >> kBrickShift);
  std::atomic_ref<std::uint8_t> flag(bricks_[b]);
  if (flag.load(std::memory_order_relaxed) == 0) flag.store(1, std::memory_order_relaxed);
}

void VoxelGrid::refresh_bricks() const {
  if (bricks_current_) return;
  std::fill(bricks_.begin(), bricks_.end(), 0);
  for (int k = 0; k < resolution_; ++k)
    for (int j = 0; j < resolution_; ++j)
      for (int i = 0; i < resolution_; ++i)
        if (voxels_[index(i, j, k)].weight > 0)
          bricks_[(static_cast<std::size_t>(k >> kBrickShift) * bricks_per_axis_ + (j >> kBrickShift)) *
                      bricks_per_axis_ +
                  (i >> kBrickShift)] = 1;
  bricks_current_ = true;
}

std::pair<Vec3, Vec3> TsdfVolume::world_aabb() const {
  const double h = 0.5 * grid.edge_length();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (int c = 0; c < 8; ++c) {
    const Vec3 corner((c & 1) ? h : -h, (c & 2) ? h : -h, (c & 4) ? h : -h);
    const Vec3 w = pose * corner;
    lo = lo.cwiseMin(w);
    hi = hi.cwiseMax(w);
  }
  return {lo, hi};
}

}  // namespace objslam
