// Analytic primitive scenes, ground-truth trajectories and RGB-D rendering.
//
// Everything here is exact: depths come from closed-form ray intersections and
// signed distances from closed-form primitive SDFs, so the module doubles as
// the oracle for reconstruction and tracking tests.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace objslam {

enum class Shape { Sphere, Box, Plane };
std::string to_string(Shape s);
Shape shape_from_string(const std::string& s);

/// Primitive in its own frame: sphere of radius dims.x at the origin, box with
/// half extents dims, or the plane z = 0 with normal +z (dims unused).
struct Primitive {
  int id = 0;  // >= 1, unique within a scene
  Shape shape = Shape::Sphere;
  Pose pose;   // primitive -> world
  Vec3 dims = Vec3::Ones();
  std::string label;
  bool is_object = true;  // planes are scenery, never instances
  Rgb colour{200, 200, 200};
  bool checker = false;   // 0.25 m checkerboard modulation (RGB only)
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  std::vector<std::string> label_set;  // class order of detection distributions

  /// Throws std::invalid_argument on duplicate / non-positive ids, bad dims or
  /// labels missing from the label set (for objects).
  void validate() const;
  const Primitive* find(int id) const;
  int label_index(const std::string& label) const;  // -1 when absent
};

double primitive_sdf(const Primitive& p, const Vec3& world_point);
/// Exact signed distance to the union of all primitives.
double analytic_sdf(const SceneSpec& scene, const Vec3& world_point);
/// Smallest ray parameter t > t_min with origin + t * dir on the surface.
std::optional<double> intersect(const Primitive& p, const Vec3& origin, const Vec3& dir,
                                double t_min = 1e-9);
Vec3 primitive_normal(const Primitive& p, const Vec3& world_point);

struct DepthNoise {
  double a = 0.0;  // sigma(d) = a + b d^2, metres
  double b = 0.0;
  bool quantise_mm = false;
  bool enabled() const { return a > 0.0 || b > 0.0 || quantise_mm; }
};

/// Instance ids per pixel: the primitive id of the nearest hit, 0 for none.
using InstanceImage = Image<std::uint16_t>;

struct SynthFrame {
  DepthImage depth;   // z-depth, metres; 0 where nothing was hit
  RgbImage rgb;
  InstanceImage index;
};

struct RenderOptions {
  double max_depth = 8.0;
  DepthNoise noise;
  std::uint64_t noise_seed = 0;  // per-frame stream; only used with noise
};

SynthFrame render_synth(const SceneSpec& scene, const Pose& camera_pose,
                        const Intrinsics& k, const RenderOptions& options = {});

/// Ground-truth camera path: keyframes interpolated linearly in translation
/// and spherically in rotation.
struct Keyframe {
  double time = 0.0;
  Pose pose;
};

struct OdometryNoise {
  double sigma_t = 0.0;  // metres per frame, per axis
  double sigma_r = 0.0;  // radians per frame, per axis
  std::uint64_t seed = 0;
  bool enabled() const { return sigma_t > 0.0 || sigma_r > 0.0; }
};

struct TrajectorySpec {
  std::vector<Keyframe> keyframes;
  int frame_count = 0;
  double frame_rate = 30.0;
  OdometryNoise odometry_noise;

  void validate() const;  // strictly increasing keyframe times
  double frame_time(int frame) const { return keyframes.front().time + frame / frame_rate; }
  Pose pose_at(double time) const;
  Pose frame_pose(int frame) const { return pose_at(frame_time(frame)); }
};

/// Per-frame body-frame odometry perturbations (zeros when noise is off).
std::vector<Twist> odometry_noise_twists(const OdometryNoise& noise, int frame_count);

struct SequenceSpec {
  std::string name;
  SceneSpec scene;
  TrajectorySpec trajectory;
  Intrinsics camera;
  RenderOptions render;
  std::uint64_t seed = 0;
};

/// Presets: "loop-small" (300 frames, two loops, 10 objects) and "loop-tiny"
/// (60 frames, one loop, 4 objects; for fast tests). Throws on unknown names.
SequenceSpec loop_sequence(const std::string& preset, std::uint64_t seed = 7);
std::vector<std::string> loop_presets();

/// Default synthetic camera: 320x240, 62 degree horizontal field of view.
Intrinsics default_synth_camera();

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

SynthFrame render_sequence_frame(const SequenceSpec& seq, int frame);

/// Surface landmarks with globally unique ids, used by the oracle features.
struct Landmark {
  std::uint64_t id;
  int primitive_id;
  Vec3 position;  // world
  Vec3 normal;    // world
};
std::vector<Landmark> scene_landmarks(const SceneSpec& scene, int per_object = 80,
                                      std::uint64_t seed = 1);

// Structured text (JSON) I/O for scenes and trajectories.
void save_scene(const SceneSpec& scene, const std::filesystem::path& path);
SceneSpec load_scene(const std::filesystem::path& path);
void save_trajectory(const TrajectorySpec& traj, const std::filesystem::path& path);
TrajectorySpec load_trajectory(const std::filesystem::path& path);

}  // namespace objslam
