// Per-object TSDF instances: creation from a detection, resizing, gated depth
// integration, foreground-mask fusion, existence and semantic probabilities.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/parallel.hpp"
#include "objslam/tsdf_volume.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace objslam {

struct ObjectParams {
  double lower_percentile = 10.0;
  double upper_percentile = 90.0;
  double size_margin = 1.5;        // edge = margin * p10..p90 span
  int initial_resolution = 64;
  int max_resolution = 128;
  double max_object_size = 3.0;    // metres
  double min_object_size = 0.05;   // metres, guards degenerate clouds
  double max_init_distance = 5.0;  // metres from the camera centre
  double max_init_iou = 0.5;       // reject when IoU >= this
  double truncation_factor = 4.0;  // mu = factor * v_o
  int erosion_radius = 2;          // pixels, square structuring element
};

struct IntegrationGate {
  double min_valid_fraction = 0.5;
  double max_rmse = 0.03;  // metres
};

struct ExistenceParams {
  double foreground_threshold = 0.5;  // voxel is foreground when E[p] > this
  double deletion_threshold = 0.1;    // delete when E[p(o)] < this
  int min_visible_pixels = 2500;      // counts change only when visible > this
};

struct ExistenceCounts {
  std::uint32_t exists = 1;
  std::uint32_t not_exists = 1;
  double expectation() const {
    return static_cast<double>(exists) / (static_cast<double>(exists) + not_exists);
  }
};

enum class SemanticFusion { Average, Multiplicative };

class ObjectVolume {
 public:
  int id = 0;
  TsdfVolume volume;
  ExistenceCounts existence;
  std::vector<double> class_distribution;  // empty until the first fusion
  int detection_count = 0;

  const Pose& pose() const { return volume.pose; }
  double size() const { return volume.grid.edge_length(); }
  int resolution() const { return volume.grid.resolution(); }
  double voxel_size() const { return volume.grid.voxel_size(); }
  std::size_t memory_bytes() const { return volume.grid.bytes(); }
};

enum class InitRejection { None, EmptyCloud, TooFar, Overlap };
std::string to_string(InitRejection r);

struct InitOutcome {
  std::optional<ObjectVolume> volume;
  InitRejection rejection = InitRejection::None;
};

/// Backprojects the eroded mask into world points (valid depth only).
std::vector<Vec3> mask_point_cloud(const Mask& mask, const DepthImage& depth,
                                   const Pose& camera_pose, const Intrinsics& k,
                                   int erosion_radius);

/// Per-axis percentile with linear interpolation between order statistics.
Vec3 axis_percentile(std::span<const Vec3> points, double percent);

struct CubeFit {
  Vec3 centre;
  double size;
};
/// Centre (p10+p90)/2 and edge m * ||p90-p10||_inf clamped to the size caps.
CubeFit fit_cube(std::span<const Vec3> points, const ObjectParams& params);

/// Axis-aligned box IoU.
double aabb_iou(const std::pair<Vec3, Vec3>& a, const std::pair<Vec3, Vec3>& b);

InitOutcome init_object(const Mask& mask, const DepthImage& depth,
                        const Pose& camera_pose, const Intrinsics& k,
                        std::span<const ObjectVolume* const> existing,
                        const ObjectParams& params, int id);

/// Builds a fresh volume around an already-computed world point cloud.
InitOutcome init_object_from_cloud(std::span<const Vec3> world_points,
                                   const Vec3& camera_centre,
                                   std::span<const ObjectVolume* const> existing,
                                   const ObjectParams& params, int id);

enum class ResizeKind { Unchanged, Grown, Reinitialised };

struct ResizeOutcome {
  ResizeKind kind = ResizeKind::Unchanged;
  /// Maps old object-frame coordinates into the new object frame (T_{O'O}).
  Pose new_from_old;
  Eigen::Vector3i shift_voxels = Eigen::Vector3i::Zero();
};

/// Grows / recentres the volume so it encloses the combined clouds (world
/// frame). The centre moves by whole voxels, v_o is kept and r_o grows with
/// even parity; beyond the resolution cap the volume is re-initialised.
ResizeOutcome resize_object(ObjectVolume& object, std::span<const Vec3> mask_cloud,
                            std::span<const Vec3> render_cloud,
                            const ObjectParams& params);

struct TargetQuality {
  double valid_fraction = 0.0;
  double rmse = 0.0;
};

bool integration_gate_passes(const TargetQuality& quality, const IntegrationGate& gate);

/// Gated depth integration over the whole volume. Returns false when the gate
/// rejected the frame (a silent skip).
bool integrate_object(ObjectVolume& object, const DepthImage& depth,
                      const Pose& camera_pose, const Intrinsics& k,
                      const TargetQuality* gate_quality, const IntegrationGate& gate,
                      Execution exec);

std::size_t fuse_foreground(ObjectVolume& object, const Mask& mask,
                            const DepthImage& depth, const Pose& camera_pose,
                            const Intrinsics& k, Execution exec);

double foreground_probability(const Voxel& v);
double foreground_probability(const ObjectVolume& object, int i, int j, int k);
/// Trilinear foreground probability at a world point; empty outside the grid.
std::optional<double> foreground_probability_at(const ObjectVolume& object,
                                                const Vec3& world_point);

enum class ExistenceDecision { Keep, Delete };

ExistenceDecision update_existence(ObjectVolume& object, int visible_pixels,
                                   bool associated, const ExistenceParams& params);

/// Throws std::invalid_argument unless the distribution sums to 1 within 1e-6
/// and matches the stored label count.
void fuse_semantics(ObjectVolume& object, std::span<const double> class_dist,
                    SemanticFusion mode = SemanticFusion::Average);

bool is_distribution(std::span<const double> dist, double tol = 1e-6);

}  // namespace objslam
