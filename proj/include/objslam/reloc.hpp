// Relocalisation from sparse 3D features: per-object snapshots, per-object
// 3-point RANSAC, then a joint RANSAC over every object that matched.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/synthworld.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace objslam {

using Descriptor = std::array<std::uint64_t, 4>;  // 256 bits

struct Keypoint {
  Vec2 pixel;
  Vec3 point;  // camera frame, from measured depth
  Descriptor descriptor{};
};

struct FeatureFrame {
  int index = 0;
  const RgbImage* rgb = nullptr;
  const DepthImage* depth = nullptr;
  Intrinsics camera;
};

/// Pair (i, j): descriptor a[i] matches b[j].
using MatchList = std::vector<std::pair<int, int>>;

class FeatureInterface {
 public:
  virtual ~FeatureInterface() = default;
  virtual std::vector<Keypoint> detect(const FeatureFrame& frame) const = 0;
  virtual MatchList match(const std::vector<Descriptor>& a,
                          const std::vector<Descriptor>& b) const = 0;
};

/// Harris corners (local maxima of det - k tr^2 over a smoothed structure
/// tensor) with a 256-bit intensity-comparison descriptor; Hamming matching
/// with a ratio test.
struct HarrisBriefParams {
  double harris_k = 0.04;
  double threshold = 1e4;  // ~ (10 grey levels per pixel)^4
  int nms_radius = 2;
  int max_keypoints = 500;
  double ratio = 0.8;
  int max_hamming = 80;
  std::uint64_t pattern_seed = 0x5eed;
};

class HarrisBrief final : public FeatureInterface {
 public:
  explicit HarrisBrief(HarrisBriefParams params = {});
  std::vector<Keypoint> detect(const FeatureFrame& frame) const override;
  MatchList match(const std::vector<Descriptor>& a,
                  const std::vector<Descriptor>& b) const override;

  static constexpr int kPatchRadius = 15;

 private:
  HarrisBriefParams params_;
  std::vector<std::array<int, 4>> pattern_;  // (dx1, dy1, dx2, dy2)
};

/// Exact-id matching shared by the oracle and file-backed features.
MatchList match_exact(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b);

/// Ground-truth landmarks of a synthetic sequence, projected with the true
/// camera pose and kept when the rendered depth confirms visibility. The
/// descriptor carries the landmark id; the 3D point comes from measured depth.
class OracleFeatures final : public FeatureInterface {
 public:
  explicit OracleFeatures(const SequenceSpec& sequence, int per_object = 80);
  std::vector<Keypoint> detect(const FeatureFrame& frame) const override;
  MatchList match(const std::vector<Descriptor>& a,
                  const std::vector<Descriptor>& b) const override {
    return match_exact(a, b);
  }

 private:
  const SequenceSpec* sequence_;
  std::vector<Landmark> landmarks_;
};

/// Precomputed features: <dir>/<frame>.txt with lines "u v d0 d1 d2 d3"
/// (descriptor words in hex). Matching is exact.
class FileFeatures final : public FeatureInterface {
 public:
  explicit FileFeatures(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::vector<Keypoint> detect(const FeatureFrame& frame) const override;
  MatchList match(const std::vector<Descriptor>& a,
                  const std::vector<Descriptor>& b) const override {
    return match_exact(a, b);
  }

 private:
  std::filesystem::path dir_;
};

void write_feature_file(const std::filesystem::path& path, const std::vector<Keypoint>& kps);

struct Snapshot {
  int object_id = 0;
  Vec3 view_direction = Vec3::UnitZ();  // object frame, origin -> camera
  Vec3 camera_position = Vec3::Zero();  // object frame
  std::vector<Vec3> points;             // object frame
  std::vector<Descriptor> descriptors;
  std::vector<double> class_dist;
};

class SnapshotStore {
 public:
  explicit SnapshotStore(double min_angle_deg = 15.0) : min_angle_deg_(min_angle_deg) {}

  /// Stores a snapshot unless one within min_angle of the current view
  /// direction exists. `keypoints` are the frame's features on the object.
  bool maybe_add(int object_id, const Pose& t_wo, const Pose& t_wc,
                 const std::vector<Keypoint>& keypoints, const std::vector<double>& class_dist);

  void remove_object(int object_id);
  /// Re-expresses stored geometry in O' given new_from_old = T_{O'O}.
  void recentre_object(int object_id, const Pose& new_from_old);

  const std::vector<Snapshot>& snapshots(int object_id) const;
  std::vector<int> object_ids() const;
  std::size_t size() const;

  void write(std::ostream& os) const;
  static SnapshotStore read(std::istream& is);
  void save(const std::filesystem::path& path) const;
  static SnapshotStore load(const std::filesystem::path& path);

 private:
  double min_angle_deg_;
  std::map<int, std::vector<Snapshot>> by_object_;
};

/// Least-squares rigid transform with dst ~ T * src (reflection corrected).
/// Throws std::invalid_argument for fewer than 3 points, mismatched sizes or
/// (near-)collinear source points.
Pose estimate_rigid_3d3d(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);
std::optional<Pose> try_estimate_rigid_3d3d(const std::vector<Vec3>& src,
                                            const std::vector<Vec3>& dst);

struct RansacParams {
  int iterations = 200;
  double threshold = 0.02;  // metres
  int min_inliers = 5;
  std::uint64_t seed = 42;
};

struct RansacResult {
  std::optional<Pose> pose;  // set when inliers.size() >= min_inliers
  std::vector<int> inliers;
};

/// Three-point RANSAC maximising the inlier count, then a least-squares refit
/// on the inliers (repeated while the inlier set grows).
RansacResult ransac_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                          const RansacParams& params);

enum class RelocFailure { None, NoCandidates, PerObjectFail, JointFail };
std::string to_string(RelocFailure f);

struct RelocParams {
  double class_gate = 0.6;  // strict
  RansacParams per_object{200, 0.02, 5, 42};
  RansacParams joint{200, 0.05, 50, 43};
};

struct RelocObject {
  Pose t_wo;
  std::vector<double> class_dist;
};

struct RelocResult {
  RelocFailure failure = RelocFailure::NoCandidates;
  Pose camera_pose;  // T_WC when successful
  std::vector<int> matched_objects;
  int joint_inliers = 0;
  bool success() const { return failure == RelocFailure::None; }
};

/// `detections` are the class distributions seen this frame; when empty the
/// class gate is skipped and every object with snapshots is a candidate.
RelocResult relocalize(const SnapshotStore& store, const std::vector<Keypoint>& frame,
                       const std::map<int, RelocObject>& objects,
                       const std::vector<std::vector<double>>& detections,
                       const FeatureInterface& features, const RelocParams& params = {});

}  // namespace objslam
