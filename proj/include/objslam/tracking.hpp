// Frame-to-model tracking: projective point-to-plane ICP against the layered
// render, with the final normal equations split per rendered target.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/object_volume.hpp"
#include "objslam/parallel.hpp"
#include "objslam/raycast.hpp"

#include <map>
#include <vector>

namespace objslam {

struct TrackingParams {
  int levels = 3;
  int iterations = 5;              // Gauss-Newton steps per level
  double max_distance = 0.1;       // metres, ||V_r - T V_l||
  double normal_threshold = 0.8;   // N_r . N_l must exceed this
  double max_condition = 1e8;      // larger -> degenerate step
  double lost_rmse = 0.05;
  double lost_instance_coverage = 0.1;
  double lost_valid_fraction = 0.5;
};

struct BilateralParams {
  int radius = 3;  // 7x7 window
  double sigma_space = 3.0;
  double sigma_range = 0.03;
};

struct PyramidLevel {
  Intrinsics camera;
  DepthImage depth;  // z-depth, metres; 0 = invalid
  PointMap vertices; // camera frame
  PointMap normals;  // camera frame, facing the camera
};

struct FramePyramid {
  std::vector<PyramidLevel> levels;  // 0 = full resolution
};

/// Reference maps (world frame) at each level; coarse levels average 2x2
/// blocks whose four pixels are all valid.
struct ReferenceLevel {
  Intrinsics camera;
  PointMap vertices;
  PointMap normals;
};
std::vector<ReferenceLevel> build_reference_pyramid(const RenderedMaps& maps, int levels);

DepthImage bilateral_filter(const DepthImage& depth, const BilateralParams& params,
                            Execution exec = Execution::Parallel);
/// 2x2 mean of the valid depths in each block; a block with none stays invalid.
DepthImage downsample_depth(const DepthImage& depth);
PointMap depth_to_vertices(const DepthImage& depth, const Intrinsics& k);
/// Cross product of central differences, oriented toward the camera. Needs all
/// four neighbours valid.
PointMap vertices_to_normals(const PointMap& vertices);

/// Throws std::invalid_argument unless depth matches K and both sides divide by
/// 2^(levels-1).
FramePyramid preprocess_frame(const DepthImage& depth, const Intrinsics& k,
                              const BilateralParams& filter = {}, int levels = 3,
                              Execution exec = Execution::Parallel);

/// Accumulated normal equations J^T J x = -J^T r.
struct LinearSystem {
  Mat6 jtj = Mat6::Zero();
  Vec6 jtr = Vec6::Zero();
  double sq_error = 0.0;
  int residual_count = 0;

  void add(const Vec6& j, double r) {
    jtj.noalias() += j * j.transpose();
    jtr.noalias() += j * r;
    sq_error += r * r;
    ++residual_count;
  }
  LinearSystem& operator+=(const LinearSystem& o) {
    jtj += o.jtj;
    jtr += o.jtr;
    sq_error += o.sq_error;
    residual_count += o.residual_count;
    return *this;
  }
};

struct TargetSystem {
  LinearSystem system;
  int valid_count = 0;     // equals system.residual_count
  int rendered_count = 0;  // pixels of this target in the reference render

  double valid_fraction() const;
  double rmse() const;
};

/// Residual N_r . (V_r - T V_l) and its derivative w.r.t. a left perturbation
/// T <- exp(zeta) T, evaluated at zeta = 0.
struct PointPlaneTerm {
  double residual;
  Vec6 jacobian;
};
PointPlaneTerm point_to_plane(const Vec3& live_camera, const Pose& t_wc,
                              const Vec3& ref_vertex, const Vec3& ref_normal);

/// One pass of projective association plus accumulation for one level.
LinearSystem icp_reduce_serial(const ReferenceLevel& ref, const Pose& ref_pose,
                               const PyramidLevel& live, const Pose& t_wc,
                               const TrackingParams& params);
/// Per-row partial sums merged in row order: deterministic for any thread count.
LinearSystem icp_reduce_parallel(const ReferenceLevel& ref, const Pose& ref_pose,
                                 const PyramidLevel& live, const Pose& t_wc,
                                 const TrackingParams& params);
inline LinearSystem icp_reduce(const ReferenceLevel& ref, const Pose& ref_pose,
                               const PyramidLevel& live, const Pose& t_wc,
                               const TrackingParams& params, Execution exec) {
  return exec == Execution::Parallel ? icp_reduce_parallel(ref, ref_pose, live, t_wc, params)
                                     : icp_reduce_serial(ref, ref_pose, live, t_wc, params);
}

/// Full-resolution systems keyed by the reference index value (object id or
/// kBackgroundIndex). Rendered counts come from the render.
std::map<int, TargetSystem> icp_partition(const RenderedMaps& ref, const PyramidLevel& live,
                                          const Pose& t_wc, const TrackingParams& params,
                                          Execution exec);

struct TrackingResult {
  Pose pose;  // T_WC of the live frame
  std::map<int, TargetSystem> systems;
  double icp_rmse = 0.0;
  double valid_fraction = 0.0;
  bool degenerate = false;
  /// energy[l][i]: E_icp at the linearisation point of iteration i of level l
  /// (index 0 = coarsest level run). A step that raised the energy is undone
  /// and ends its level, so each row is non-increasing and may be short.
  std::vector<std::vector<double>> energy;

  LinearSystem total() const;
  double instance_coverage() const;
};

TrackingResult icp_track(const RenderedMaps& ref, const FramePyramid& live, const Pose& init,
                         const TrackingParams& params = {},
                         Execution exec = Execution::Parallel);

using TrackingQuality = std::map<int, TargetQuality>;
TrackingQuality tracking_quality(const TrackingResult& result);

/// Lost when the global rmse exceeds the limit, when instances cover enough of
/// the render but too few pixels tracked, or when the system was degenerate.
bool tracking_lost(const TrackingResult& result, const TrackingParams& params = {});

/// Eigen-decomposition condition number of a symmetric PSD matrix (inf when
/// the smallest eigenvalue is not positive).
double condition_number(const Mat6& jtj);

}  // namespace objslam
