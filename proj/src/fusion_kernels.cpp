#include "objslam/fusion_kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace objslam {

namespace {

struct IndexRange {
  int lo[3];
  int hi[3];  // exclusive
  bool empty() const { return lo[0] >= hi[0] || lo[1] >= hi[1] || lo[2] >= hi[2]; }
};

struct Projector {
  Mat3 step;  // columns: camera-frame displacement per +1 voxel along x, y, z
  Vec3 origin;
  const Intrinsics& k;
};

Projector make_projector(const TsdfVolume& volume, const Pose& camera_pose,
                         const Intrinsics& k) {
  const Pose cam_from_volume = camera_pose.inverse() * volume.pose;
  const double v = volume.grid.voxel_size();
  const double off = (0.5 - 0.5 * volume.grid.resolution()) * v;
  return {cam_from_volume.rotation() * v,
          cam_from_volume.rotation() * Vec3::Constant(off) + cam_from_volume.translation(),
          k};
}

float max_valid_depth(const DepthImage& depth) {
  float m = 0.0f;
  for (float d : depth.values()) {
    if (valid_depth(d)) m = std::max(m, d);
  }
  return m;
}

IndexRange full_range(const VoxelGrid& grid) {
  const int r = grid.resolution();
  return {{0, 0, 0}, {r, r, r}};
}

// Voxel index box containing the view frustum truncated at z_far.
IndexRange frustum_range(const TsdfVolume& volume, const Pose& camera_pose,
                         const Intrinsics& k, double z_far) {
  const Pose volume_from_cam = volume.pose.inverse() * camera_pose;
  const double u0 = -1.5, v0 = -1.5;
  const double u1 = k.width + 0.5, v1 = k.height + 0.5;
  const std::array<Vec3, 5> pts = {
      volume_from_cam.translation(),
      volume_from_cam * k.backproject_unchecked(u0, v0, z_far),
      volume_from_cam * k.backproject_unchecked(u1, v0, z_far),
      volume_from_cam * k.backproject_unchecked(u0, v1, z_far),
      volume_from_cam * k.backproject_unchecked(u1, v1, z_far)};
  Vec3 lo = pts[0], hi = pts[0];
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Vec3 glo = volume.grid.to_grid(lo);
  const Vec3 ghi = volume.grid.to_grid(hi);
  const int r = volume.grid.resolution();
  IndexRange range{};
  for (int a = 0; a < 3; ++a) {
    const double l = std::floor(glo[a]) - 1.0;
    const double h = std::ceil(ghi[a]) + 2.0;
    range.lo[a] = static_cast<int>(std::clamp(l, 0.0, static_cast<double>(r)));
    range.hi[a] = static_cast<int>(std::clamp(h, 0.0, static_cast<double>(r)));
  }
  return range;
}

// Voxels i in [lo, hi) of a row may satisfy f0 + f1 * i >= 0; widened by a
// voxel on each side so the exact per-voxel test stays authoritative.
void clip_halfspace(double f0, double f1, int& lo, int& hi) {
  if (f1 == 0.0 || !std::isfinite(f0) || !std::isfinite(f1)) return;
  const double root = -f0 / f1;
  if (f1 > 0.0) {
    const double l = std::floor(root) - 1.0;
    if (l > lo) lo = l >= hi ? hi : static_cast<int>(l);
  } else {
    const double u = std::ceil(root) + 2.0;
    if (u < hi) hi = u <= lo ? lo : static_cast<int>(u);
  }
}

// Calls op(voxel, depth_at_pixel, z, pixel_x, pixel_y) for every voxel in the
// range that projects onto a valid depth pixel; op returns true on update.
// With MarksObserved, updated voxels are recorded in the brick occupancy.
template <bool MarksObserved, typename Op>
std::size_t sweep(TsdfVolume& volume, const DepthImage& depth, const Projector& pr,
                  const IndexRange& range, Execution exec, Op&& op) {
  if (range.empty()) return 0;
  VoxelGrid& grid = volume.grid;
  Voxel* voxels = grid.fusion_voxels();
  const int nz = range.hi[2] - range.lo[2];
  std::vector<std::size_t> counts(static_cast<std::size_t>(nz), 0);
  const int w = depth.width();
  const int h = depth.height();
  const Vec3 s0 = pr.step.col(0);
  // Image-bound half-spaces in camera coordinates (valid for z > 0):
  // fx x + (cx + 0.5) z >= 0 and fx x + (cx + 0.5 - w) z < 0, same for y.
  const double cu0 = pr.k.cx + 0.5, cu1 = pr.k.cx + 0.5 - w;
  const double cv0 = pr.k.cy + 0.5, cv1 = pr.k.cy + 0.5 - h;
  for_each_index(nz, exec, [&](int dz) {
    const int kz = range.lo[2] + dz;
    std::size_t n = 0;
    for (int j = range.lo[1]; j < range.hi[1]; ++j) {
      const Vec3 a = pr.origin + pr.step.col(1) * j + pr.step.col(2) * kz;
      int ilo = range.lo[0], ihi = range.hi[0];
      if (exec == Execution::Parallel) {
        clip_halfspace(a.z(), s0.z(), ilo, ihi);
      clip_halfspace(pr.k.fx * a.x() + cu0 * a.z(), pr.k.fx * s0.x() + cu0 * s0.z(), ilo, ihi);
      clip_halfspace(-(pr.k.fx * a.x() + cu1 * a.z()), -(pr.k.fx * s0.x() + cu1 * s0.z()), ilo,
                     ihi);
      clip_halfspace(pr.k.fy * a.y() + cv0 * a.z(), pr.k.fy * s0.y() + cv0 * s0.z(), ilo, ihi);
      clip_halfspace(-(pr.k.fy * a.y() + cv1 * a.z()), -(pr.k.fy * s0.y() + cv1 * s0.z()), ilo,
                       ihi);
      }
      for (int i = ilo; i < ihi; ++i) {
        const Vec3 p = pr.origin + pr.step.col(0) * i + pr.step.col(1) * j +
                       pr.step.col(2) * kz;
        if (!(p.z() > 0.0)) continue;
        const double uf = pr.k.fx * p.x() / p.z() + pr.k.cx;
        const double vf = pr.k.fy * p.y() / p.z() + pr.k.cy;
        const double ur = std::floor(uf + 0.5);
        const double vr = std::floor(vf + 0.5);
        if (ur < 0.0 || vr < 0.0 || ur >= w || vr >= h) continue;
        const int ui = static_cast<int>(ur);
        const int vi = static_cast<int>(vr);
        const float d = depth(ui, vi);
        if (!valid_depth(d)) continue;
        if (op(voxels[grid.index(i, j, kz)], static_cast<double>(d), p.z(), ui, vi)) {
          ++n;
          if constexpr (MarksObserved) grid.mark_observed(i, j, kz);
        }
      }
    }
    counts[static_cast<std::size_t>(dz)] = n;
  });
  std::size_t total = 0;
  for (auto c : counts) total += c;
  return total;
}

auto integrate_op(double mu) {
  return [mu](Voxel& vx, double d, double z, int, int) {
    const double sdf = d - z;
    if (sdf <= -mu) return false;
    const double tsdf = std::min(1.0, sdf / mu);
    const double w = vx.weight;
    vx.sdf = static_cast<float>((static_cast<double>(vx.sdf) * w + tsdf) / (w + 1.0));
    vx.weight = saturating_increment(vx.weight);
    return true;
  };
}

auto foreground_op(double mu, const Mask& mask) {
  return [mu, &mask](Voxel& vx, double d, double z, int u, int v) {
    if (std::abs(d - z) >= mu) return false;
    const std::uint16_t m = mask(u, v) ? 1 : 0;
    vx.fg = saturating_increment(vx.fg, m);
    vx.bg = saturating_increment(vx.bg, static_cast<std::uint16_t>(1 - m));
    return true;
  };
}

void check_shapes(const DepthImage& depth, const Intrinsics& k) {
  if (!depth.same_shape(k.width, k.height)) {
    throw std::invalid_argument("fusion: depth image does not match intrinsics");
  }
}

}  // namespace

std::size_t integrate_depth_serial(TsdfVolume& volume, const DepthImage& depth,
                                   const Pose& camera_pose, const Intrinsics& k) {
  check_shapes(depth, k);
  const auto pr = make_projector(volume, camera_pose, k);
  return sweep<true>(volume, depth, pr, full_range(volume.grid), Execution::Serial,
                     integrate_op(volume.truncation()));
}

std::size_t integrate_depth_parallel(TsdfVolume& volume, const DepthImage& depth,
                                     const Pose& camera_pose, const Intrinsics& k) {
  check_shapes(depth, k);
  const float dmax = max_valid_depth(depth);
  if (dmax <= 0.0f) return 0;
  const auto pr = make_projector(volume, camera_pose, k);
  const double mu = volume.truncation();
  const auto range = frustum_range(volume, camera_pose, k, dmax + mu);
  return sweep<true>(volume, depth, pr, range, Execution::Parallel, integrate_op(mu));
}

std::size_t fuse_foreground_serial(TsdfVolume& volume, const Mask& mask,
                                   const DepthImage& depth, const Pose& camera_pose,
                                   const Intrinsics& k) {
  check_shapes(depth, k);
  if (!mask.same_shape(depth)) throw std::invalid_argument("fusion: mask shape");
  const auto pr = make_projector(volume, camera_pose, k);
  return sweep<false>(volume, depth, pr, full_range(volume.grid), Execution::Serial,
               foreground_op(volume.truncation(), mask));
}

std::size_t fuse_foreground_parallel(TsdfVolume& volume, const Mask& mask,
                                     const DepthImage& depth,
                                     const Pose& camera_pose, const Intrinsics& k) {
  check_shapes(depth, k);
  if (!mask.same_shape(depth)) throw std::invalid_argument("fusion: mask shape");
  const float dmax = max_valid_depth(depth);
  if (dmax <= 0.0f) return 0;
  const auto pr = make_projector(volume, camera_pose, k);
  const double mu = volume.truncation();
  const auto range = frustum_range(volume, camera_pose, k, dmax + mu);
  return sweep<false>(volume, depth, pr, range, Execution::Parallel,
               foreground_op(mu, mask));
}

}  // namespace objslam
