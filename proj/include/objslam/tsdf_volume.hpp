// Voxel storage shared by object volumes and the coarse background volume.
#pragma once

#include "objslam/geometry.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

namespace objslam {

#pragma pack(push, 1)
/// 10-byte voxel: normalised truncated SDF, fusion weight, and the
/// foreground / not-foreground counts of the per-voxel beta distribution.
struct Voxel {
  float sdf = 1.0f;
  std::uint16_t weight = 0;
  std::uint16_t fg = 1;
  std::uint16_t bg = 1;

  bool operator==(const Voxel&) const = default;
};
#pragma pack(pop)
static_assert(sizeof(Voxel) == 10, "voxel layout must stay at 10 bytes");

inline constexpr std::uint16_t kMaxCount = std::numeric_limits<std::uint16_t>::max();

inline std::uint16_t saturating_increment(std::uint16_t v, std::uint16_t by = 1) {
  const unsigned s = static_cast<unsigned>(v) + by;
  return s > kMaxCount ? kMaxCount : static_cast<std::uint16_t>(s);
}

/// Cubic grid of resolution^3 voxels, x fastest. Voxel (i,j,k) has its
/// centre at ((i + 0.5 - r/2) v, ...) in the volume frame, whose origin is
/// the cube centre.
class VoxelGrid {
 public:
  VoxelGrid() = default;
  VoxelGrid(int resolution, double voxel_size);

  int resolution() const { return resolution_; }
  double voxel_size() const { return voxel_size_; }
  double edge_length() const { return resolution_ * voxel_size_; }
  std::size_t voxel_count() const { return voxels_.size(); }
  std::size_t bytes() const { return voxels_.size() * sizeof(Voxel); }

  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(k) * resolution_ + j) * resolution_ + i;
  }
  Voxel& at(int i, int j, int k) {
    bricks_current_ = false;
    return voxels_[index(i, j, k)];
  }
  const Voxel& at(int i, int j, int k) const { return voxels_[index(i, j, k)]; }
  bool contains(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < resolution_ && j < resolution_ &&
           k < resolution_;
  }

  Vec3 voxel_centre(int i, int j, int k) const {
    const double h = 0.5 * resolution_;
    return {(i + 0.5 - h) * voxel_size_, (j + 0.5 - h) * voxel_size_,
            (k + 0.5 - h) * voxel_size_};
  }
  /// Continuous grid coordinate: voxel centres sit on integers.
  Vec3 to_grid(const Vec3& p_volume) const {
    return p_volume / voxel_size_ + Vec3::Constant(0.5 * resolution_ - 0.5);
  }

  /// Mutable access marks the brick occupancy stale (see refresh_bricks).
  std::vector<Voxel>& voxels() {
    bricks_current_ = false;
    return voxels_;
  }
  const std::vector<Voxel>& voxels() const { return voxels_; }

  void reset();

  // Brick occupancy: one flag per 8^3 block, zero only when every voxel in
  // the block is unobserved (weight 0). Lets ray marching skip voxel loads in
  // never-observed space without changing any sample.
  static constexpr int kBrickShift = 3;

  /// Raw storage for the fusion kernels, which report every voxel they give a
  /// non-zero weight through mark_observed and so keep the occupancy current.
  Voxel* fusion_voxels() { return voxels_.data(); }
  void mark_observed(int i, int j, int k);  // safe to call concurrently
  /// Rebuilds stale occupancy. Not thread-safe; call before sharing the grid
  /// across threads for marching.
  void refresh_bricks() const;
  bool bricks_current() const { return bricks_current_; }
  /// False only when all voxels of the 2x2x2 block at (x0, y0, z0) are known
  /// to be unobserved. Requires current occupancy.
  bool block_may_be_observed(int x0, int y0, int z0) const {
    const int bx0 = x0 >> kBrickShift, bx1 = (x0 + 1) >> kBrickShift;
    const int by0 = y0 >> kBrickShift, by1 = (y0 + 1) >> kBrickShift;
    const int bz0 = z0 >> kBrickShift, bz1 = (z0 + 1) >> kBrickShift;
    for (int bz = bz0; bz <= bz1; ++bz)
      for (int by = by0; by <= by1; ++by)
        for (int bx = bx0; bx <= bx1; ++bx)
          if (bricks_[(static_cast<std::size_t>(bz) * bricks_per_axis_ + by) * bricks_per_axis_ + bx])
            return true;
    return false;
  }

 private:
  int resolution_ = 0;
  double voxel_size_ = 0.0;
  std::vector<Voxel> voxels_;
  int bricks_per_axis_ = 0;
  mutable std::vector<std::uint8_t> bricks_;
  mutable bool bricks_current_ = true;
};

/// A voxel grid placed in the world, plus its truncation band.
struct TsdfVolume {
  Pose pose;  // volume frame -> world
  VoxelGrid grid;
  double truncation_factor = 4.0;  // mu = factor * voxel size

  double truncation() const { return truncation_factor * grid.voxel_size(); }
  /// World-space axis-aligned bounds of the (possibly rotated) cube.
  std::pair<Vec3, Vec3> world_aabb() const;
};

struct TrilinearSample {
  double sdf;
  double foreground;  // F / (F + N), interpolated
};

/// Trilinear sample at a continuous grid coordinate (see VoxelGrid::to_grid).
/// Empty when the point is outside the interpolation domain or any of the 8
/// neighbours is unobserved.
inline std::optional<TrilinearSample> sample_trilinear_grid(const VoxelGrid& grid,
                                                             const Vec3& g,
                                                             bool with_foreground) {
  const int r = grid.resolution();
  const double fx0 = std::floor(g.x());
  const double fy0 = std::floor(g.y());
  const double fz0 = std::floor(g.z());
  if (fx0 < 0.0 || fy0 < 0.0 || fz0 < 0.0 || fx0 >= r - 1 || fy0 >= r - 1 ||
      fz0 >= r - 1) {
    return std::nullopt;
  }
  const int x0 = static_cast<int>(fx0);
  const int y0 = static_cast<int>(fy0);
  const int z0 = static_cast<int>(fz0);
  if (grid.bricks_current() && !grid.block_may_be_observed(x0, y0, z0)) return std::nullopt;
  const double a = g.x() - fx0;
  const double b = g.y() - fy0;
  const double c_ = g.z() - fz0;
  const Voxel* base = grid.voxels().data();
  const std::size_t sy = static_cast<std::size_t>(r);
  const std::size_t sz = sy * sy;
  const std::size_t i000 = grid.index(x0, y0, z0);
  const Voxel* c[8] = {base + i000,           base + i000 + 1,
                       base + i000 + sy,      base + i000 + 1 + sy,
                       base + i000 + sz,      base + i000 + 1 + sz,
                       base + i000 + sy + sz, base + i000 + 1 + sy + sz};
  for (const Voxel* v : c) {
    if (v->weight == 0) return std::nullopt;
  }
  // Nested lerps reproduce constant fields exactly (e.g. the 0.5 prior).
  auto lerp3 = [&](auto value) {
    const double x00 = value(c[0]) + a * (value(c[1]) - value(c[0]));
    const double x10 = value(c[2]) + a * (value(c[3]) - value(c[2]));
    const double x01 = value(c[4]) + a * (value(c[5]) - value(c[4]));
    const double x11 = value(c[6]) + a * (value(c[7]) - value(c[6]));
    const double y0 = x00 + b * (x10 - x00);
    const double y1 = x01 + b * (x11 - x01);
    return y0 + c_ * (y1 - y0);
  };
  const double sdf = lerp3([](const Voxel* v) { return static_cast<double>(v->sdf); });
  double fg = 0.0;
  if (with_foreground) {
    fg = lerp3([](const Voxel* v) {
      return static_cast<double>(v->fg) / (static_cast<double>(v->fg) + v->bg);
    });
  }
  return TrilinearSample{sdf, fg};
}

/// Trilinear sample at a volume-frame point.
inline std::optional<TrilinearSample> sample_trilinear(const VoxelGrid& grid,
                                                        const Vec3& p_volume,
                                                        bool with_foreground) {
  return sample_trilinear_grid(grid, grid.to_grid(p_volume), with_foreground);
}

}  // namespace objslam
