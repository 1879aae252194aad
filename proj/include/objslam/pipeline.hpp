// The full per-frame loop: tracking against the layered render, coarse
// background lifecycle, object instances, pose graph and relocalisation.
#pragma once

#include "objslam/association.hpp"
#include "objslam/background.hpp"
#include "objslam/io.hpp"
#include "objslam/object_volume.hpp"
#include "objslam/posegraph.hpp"
#include "objslam/raycast.hpp"
#include "objslam/reloc.hpp"
#include "objslam/segmentation.hpp"
#include "objslam/tracking.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace objslam {

/// Every tunable constant, grouped by owning module. Serialised as
/// "key = value" lines; see PipelineConfig::visit for the key list.
struct PipelineConfig {
  ObjectParams objects;
  IntegrationGate gate;
  ExistenceParams existence;
  DetectionFilter detection;
  double association_threshold = 0.2;
  BackgroundParams background;
  TrackingParams icp;
  BilateralParams filter;
  RaycastParams raycast;
  OptimizeParams graph;
  double snapshot_min_angle = 15.0;  // degrees
  RelocParams reloc;
  int detection_cadence = 30;
  std::uint64_t seed = 0;
  int max_lost_frames = 90;
  bool parallel = true;      // OpenMP kernels (bit-identical to the serial ones)
  bool async_masks = false;  // detections applied on arrival; not reproducible
  bool semantic_product = false;  // multiplicative instead of averaged classes

  /// Calls f(key, field, doc) for every field, in file order.
  template <typename Self, typename F>
  static void visit(Self& c, F&& f);

  /// Throws std::invalid_argument naming the offending key.
  void validate() const;

  void write(std::ostream& os) const;
  /// Overrides defaults with the keys present; unknown keys and malformed
  /// values are errors naming the line.
  static PipelineConfig read(std::istream& is, const std::string& name = "<config>");
  static PipelineConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
  /// Applies one "key=value" override.
  void set(const std::string& key, const std::string& value);
};

template <typename Self, typename F>
void PipelineConfig::visit(Self& c, F&& f) {
  f("objects.lower_percentile", c.objects.lower_percentile, "lower per-axis percentile of the mask cloud");
  f("objects.upper_percentile", c.objects.upper_percentile, "upper per-axis percentile");
  f("objects.size_margin", c.objects.size_margin, "cube edge = margin * percentile span");
  f("objects.initial_resolution", c.objects.initial_resolution, "voxels per edge at creation");
  f("objects.max_resolution", c.objects.max_resolution, "voxels per edge cap when growing");
  f("objects.max_size", c.objects.max_object_size, "metres, cube edge cap");
  f("objects.min_size", c.objects.min_object_size, "metres, cube edge floor");
  f("objects.max_init_distance", c.objects.max_init_distance, "metres, camera to cube centre");
  f("objects.max_init_iou", c.objects.max_init_iou, "reject new instances overlapping this much");
  f("objects.truncation_factor", c.objects.truncation_factor, "mu = factor * voxel size");
  f("objects.erosion_radius", c.objects.erosion_radius, "pixels, mask erosion before backprojection");
  f("gate.min_valid_fraction", c.gate.min_valid_fraction, "object integration needs more tracked pixels than this");
  f("gate.max_rmse", c.gate.max_rmse, "metres, object integration needs a lower ICP rmse");
  f("existence.foreground_threshold", c.existence.foreground_threshold, "voxel foreground when E[p] exceeds this");
  f("existence.deletion_threshold", c.existence.deletion_threshold, "delete objects with E[p(o)] below this");
  f("existence.min_visible_pixels", c.existence.min_visible_pixels, "existence changes only above this rendered area");
  f("detection.max_count", c.detection.max_detections, "keep the top-scoring detections");
  f("detection.border", c.detection.border, "pixels; masks touching this band are dropped");
  f("detection.min_probability", c.detection.min_probability, "max class probability must exceed this");
  f("detection.min_area", c.detection.min_area, "pixels; mask area must exceed this");
  f("association.threshold", c.association_threshold, "overlap must exceed this");
  f("background.resolution", c.background.resolution, "voxels per edge");
  f("background.voxel_size", c.background.voxel_size, "metres");
  f("background.centre_offset", c.background.centre_offset, "metres along the camera z-axis");
  f("background.reset_distance", c.background.reset_distance, "metres, spherical reset threshold");
  f("background.truncation_factor", c.background.truncation_factor, "mu = factor * voxel size");
  f("icp.levels", c.icp.levels, "pyramid levels");
  f("icp.iterations", c.icp.iterations, "Gauss-Newton steps per level");
  f("icp.max_distance", c.icp.max_distance, "metres, correspondence distance gate");
  f("icp.normal_threshold", c.icp.normal_threshold, "normal dot product must exceed this");
  f("icp.max_condition", c.icp.max_condition, "degenerate above this condition number");
  f("icp.lost_rmse", c.icp.lost_rmse, "metres; lost above this");
  f("icp.lost_instance_coverage", c.icp.lost_instance_coverage, "instance share of the render that arms the valid-fraction test");
  f("icp.lost_valid_fraction", c.icp.lost_valid_fraction, "lost below this tracked fraction");
  f("filter.radius", c.filter.radius, "bilateral window half-width, pixels (0 disables)");
  f("filter.sigma_space", c.filter.sigma_space, "pixels");
  f("filter.sigma_range", c.filter.sigma_range, "metres");
  f("raycast.min_range", c.raycast.min_range, "metres");
  f("raycast.max_range", c.raycast.max_range, "metres");
  f("raycast.refine_below_sdf", c.raycast.refine_below_sdf, "normalised sdf where steps halve");
  f("raycast.foreground_threshold", c.raycast.foreground_threshold, "object hits need a higher foreground probability");
  f("raycast.background_margin", c.raycast.background_margin, "metres an object hit may trail the background");
  f("graph.huber", c.graph.huber, "threshold on e^T H e");
  f("graph.initial_lambda", c.graph.initial_lambda, "LM damping at start");
  f("graph.lambda_up", c.graph.lambda_up, "damping factor on rejection");
  f("graph.lambda_down", c.graph.lambda_down, "damping factor on acceptance");
  f("graph.min_relative_decrease", c.graph.min_relative_decrease, "stop below this relative error decrease");
  f("graph.min_step", c.graph.min_step, "stop below this step norm");
  f("graph.max_iterations", c.graph.max_iterations, "LM iteration cap");
  f("reloc.snapshot_min_angle", c.snapshot_min_angle, "degrees between stored views of an object");
  f("reloc.class_gate", c.reloc.class_gate, "class dot product must exceed this");
  f("reloc.object_iterations", c.reloc.per_object.iterations, "per-object RANSAC iterations");
  f("reloc.object_threshold", c.reloc.per_object.threshold, "metres, per-object inlier distance");
  f("reloc.object_min_inliers", c.reloc.per_object.min_inliers, "per-object acceptance");
  f("reloc.object_seed", c.reloc.per_object.seed, "per-object RANSAC seed (plus object id)");
  f("reloc.joint_iterations", c.reloc.joint.iterations, "joint RANSAC iterations");
  f("reloc.joint_threshold", c.reloc.joint.threshold, "metres, joint inlier distance");
  f("reloc.joint_min_inliers", c.reloc.joint.min_inliers, "joint acceptance");
  f("reloc.joint_seed", c.reloc.joint.seed, "joint RANSAC seed");
  f("pipeline.detection_cadence", c.detection_cadence, "frames between detections");
  f("pipeline.seed", c.seed, "seed for every random choice in a run");
  f("pipeline.max_lost_frames", c.max_lost_frames, "consecutive lost frames before giving up");
  f("pipeline.parallel", c.parallel, "1 = OpenMP kernels");
  f("pipeline.async_masks", c.async_masks, "1 = apply detections on arrival");
  f("pipeline.semantic_product", c.semantic_product, "1 = multiplicative class fusion");
}

struct FrameInput {
  int index = 0;
  double timestamp = 0.0;
  const DepthImage* depth = nullptr;
  const RgbImage* rgb = nullptr;
  /// Body-frame perturbation applied to the tracked pose (simulated odometry
  /// error); the background volume is moved with the camera so the local
  /// model stays consistent with the perturbed estimate.
  Twist odometry_noise = Twist::Zero();
};

struct FrameTimings {
  double preprocess = 0, raycast = 0, tracking = 0, reloc = 0, graph = 0, background = 0,
         objects = 0, detection = 0, total = 0;  // milliseconds
};

struct FrameReport {
  int index = 0;
  Pose pose;
  bool lost = false;
  bool relocalised = false;
  bool background_reset = false;
  bool detection_frame = false;
  double icp_rmse = 0.0;
  double valid_fraction = 0.0;
  std::vector<std::string> events;
  FrameTimings timings;
};

enum class RunStatus { Running, Completed, AbortedLost };
std::string to_string(RunStatus s);

class Pipeline {
 public:
  /// `masks` and `features` may be null (no detections / no relocalisation).
  /// `stats` receives one JSON object per frame when non-null.
  Pipeline(PipelineConfig config, Intrinsics camera, std::shared_ptr<const MaskSource> masks,
           std::shared_ptr<const FeatureInterface> features, std::ostream* stats = nullptr);
  ~Pipeline();

  FrameReport process(const FrameInput& frame);
  /// Applies any outstanding asynchronous detections.
  void finish();

  RunStatus status() const { return status_; }
  const TrajectoryRecord& trajectory() const { return trajectory_; }
  const std::map<int, ObjectVolume>& objects() const { return objects_; }
  const PoseGraph& graph() const { return graph_; }
  const SnapshotStore& snapshots() const { return snapshots_; }
  const PipelineConfig& config() const { return config_; }
  const Pose& pose() const { return pose_; }

  /// Inventory consistency: every volume has a graph node and vice versa.
  bool inventory_consistent() const;

 private:
  struct DetectionContext;

  Execution exec() const { return config_.parallel ? Execution::Parallel : Execution::Serial; }
  std::vector<const ObjectVolume*> object_list() const;
  RenderedMaps render(const Pose& pose) const;
  std::optional<std::vector<Detection>> fetch_detections(int frame);
  void handle_detections(const DetectionContext& ctx, std::vector<Detection> raw, FrameReport& report);
  void add_camera_node(int frame, const Pose& state, const Pose& icp_pose,
                       const std::map<int, TargetSystem>& systems);
  void optimise(FrameReport& report);
  void remove_object(int id);
  void write_stats(const FrameReport& report) const;

  PipelineConfig config_;
  Intrinsics camera_;
  std::shared_ptr<const MaskSource> masks_;
  std::shared_ptr<const FeatureInterface> features_;
  std::unique_ptr<AsyncMaskSource> async_;
  std::map<int, std::unique_ptr<DetectionContext>> pending_;
  std::ostream* stats_;

  RunStatus status_ = RunStatus::Running;
  int frames_ = 0;
  int lost_streak_ = 0;
  int next_object_id_ = 1;
  Pose pose_;
  std::optional<CoarseVolume> background_;
  std::map<int, ObjectVolume> objects_;
  PoseGraph graph_;
  SnapshotStore snapshots_;
  TrajectoryRecord trajectory_;
};

// --- Runners ------------------------------------------------------------------

struct RunOptions {
  PipelineConfig config;
  std::ostream* stats = nullptr;
  int max_frames = -1;  // all when negative
  bool use_masks = true;
  bool use_features = true;
};

struct RunResult {
  RunStatus status = RunStatus::Completed;
  TrajectoryRecord trajectory;
  std::optional<TrajectoryRecord> groundtruth;
  std::map<int, ObjectVolume> objects;
  PoseGraph graph;
  SnapshotStore snapshots;
  int frames = 0;
};

struct SyntheticRunOptions {
  MaskCorruption corruption;
  /// Simulated odometry error; the sequence's own odometry_noise when unset.
  std::optional<OdometryNoise> odometry_noise;
};

/// Renders each frame of a synthetic sequence on the fly; masks come from the
/// ground-truth source and relocalisation uses oracle features.
RunResult run_synthetic(const SequenceSpec& sequence, const RunOptions& options,
                        const SyntheticRunOptions& synthetic = {});

/// TUM RGB-D layout; masks from `mask_dir` when given (file source).
RunResult run_tum(const std::filesystem::path& dir, const Intrinsics& camera,
                  const RunOptions& options,
                  const std::optional<std::filesystem::path>& mask_dir = std::nullopt);

/// Writes trajectory.txt, graph.txt, snapshots.bin, meshes/object_<id>.ply,
/// volumes/object_<id>.{vox,json} and summary.json into `dir`.
void write_run_outputs(const std::filesystem::path& dir, const RunResult& result);

}  // namespace objslam
