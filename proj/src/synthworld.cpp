#include "objslam/synthworld.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>
#include <stdexcept>

namespace objslam {

std::string to_string(Shape s) {
  switch (s) {
    case Shape::Sphere: return "sphere";
    case Shape::Box: return "box";
    case Shape::Plane: return "plane";
  }
  return "unknown";
}

Shape shape_from_string(const std::string& s) {
  if (s == "sphere") return Shape::Sphere;
  if (s == "box") return Shape::Box;
  if (s == "plane") return Shape::Plane;
  throw std::invalid_argument("unknown shape '" + s + "'");
}

void SceneSpec::validate() const {
  std::set<int> ids;
  for (const auto& p : primitives) {
    if (p.id < 1 || p.id > 65535) throw std::invalid_argument("primitive id out of range");
    if (!ids.insert(p.id).second) {
      throw std::invalid_argument("duplicate primitive id " + std::to_string(p.id));
    }
    if (p.shape != Shape::Plane && !(p.dims.minCoeff() > 0.0)) {
      throw std::invalid_argument("primitive " + std::to_string(p.id) +
                                  " has non-positive dimensions");
    }
    if (p.shape == Shape::Plane && p.is_object) {
      throw std::invalid_argument("planes cannot be object instances");
    }
    if (p.is_object && label_index(p.label) < 0) {
      throw std::invalid_argument("label '" + p.label + "' missing from the label set");
    }
  }
}

const Primitive* SceneSpec::find(int id) const {
  for (const auto& p : primitives) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

int SceneSpec::label_index(const std::string& label) const {
  const auto it = std::find(label_set.begin(), label_set.end(), label);
  return it == label_set.end() ? -1 : static_cast<int>(it - label_set.begin());
}

namespace {

double box_sdf(const Vec3& q, const Vec3& half) {
  const Vec3 d = q.cwiseAbs() - half;
  return d.cwiseMax(0.0).norm() + std::min(d.maxCoeff(), 0.0);
}

}  // namespace

double primitive_sdf(const Primitive& p, const Vec3& world_point) {
  const Vec3 q = p.pose.inverse() * world_point;
  switch (p.shape) {
    case Shape::Sphere: return q.norm() - p.dims.x();
    case Shape::Box: return box_sdf(q, p.dims);
    case Shape::Plane: return q.z();
  }
  return std::numeric_limits<double>::infinity();
}

double analytic_sdf(const SceneSpec& scene, const Vec3& world_point) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& p : scene.primitives) d = std::min(d, primitive_sdf(p, world_point));
  return d;
}

std::optional<double> intersect(const Primitive& p, const Vec3& origin, const Vec3& dir,
                                double t_min) {
  const Pose inv = p.pose.inverse();
  const Vec3 o = inv * origin;
  const Vec3 d = inv.rotate(dir);
  switch (p.shape) {
    case Shape::Sphere: {
      const double r = p.dims.x();
      const double a = d.squaredNorm();
      const double b = o.dot(d);
      const double c = o.squaredNorm() - r * r;
      const double disc = b * b - a * c;
      if (disc < 0.0) return std::nullopt;
      const double s = std::sqrt(disc);
      // Numerically stable roots of a t^2 + 2 b t + c.
      const double qv = -b - std::copysign(s, b);
      double t0 = qv / a;
      double t1 = (qv != 0.0) ? c / qv : t0;
      if (t0 > t1) std::swap(t0, t1);
      if (t0 > t_min) return t0;
      if (t1 > t_min) return t1;
      return std::nullopt;
    }
    case Shape::Box: {
      double tn = -std::numeric_limits<double>::infinity();
      double tf = std::numeric_limits<double>::infinity();
      for (int a = 0; a < 3; ++a) {
        if (d[a] == 0.0) {
          if (std::abs(o[a]) > p.dims[a]) return std::nullopt;
          continue;
        }
        double t0 = (-p.dims[a] - o[a]) / d[a];
        double t1 = (p.dims[a] - o[a]) / d[a];
        if (t0 > t1) std::swap(t0, t1);
        tn = std::max(tn, t0);
        tf = std::min(tf, t1);
      }
      if (tn > tf) return std::nullopt;
      if (tn > t_min) return tn;
      if (tf > t_min) return tf;
      return std::nullopt;
    }
    case Shape::Plane: {
      if (d.z() == 0.0) return std::nullopt;
      const double t = -o.z() / d.z();
      if (t > t_min) return t;
      return std::nullopt;
    }
  }
  return std::nullopt;
}

Vec3 primitive_normal(const Primitive& p, const Vec3& world_point) {
  const Vec3 q = p.pose.inverse() * world_point;
  Vec3 n = Vec3::UnitZ();
  if (p.shape == Shape::Sphere) {
    n = q.normalized();
  } else if (p.shape == Shape::Box) {
    const Vec3 rel = q.cwiseAbs().cwiseQuotient(p.dims);
    int axis = 0;
    rel.maxCoeff(&axis);
    n = Vec3::Zero();
    n[axis] = q[axis] >= 0.0 ? 1.0 : -1.0;
  }
  return p.pose.rotate(n);
}

SynthFrame render_synth(const SceneSpec& scene, const Pose& camera_pose,
                        const Intrinsics& k, const RenderOptions& options) {
  k.validate();
  SynthFrame f{DepthImage(k.width, k.height, 0.0f),
               RgbImage(k.width, k.height, Rgb{0, 0, 0}),
               InstanceImage(k.width, k.height, 0)};
  const Vec3 light = Vec3(0.3, -0.4, 1.0).normalized();
  const Vec3 origin = camera_pose.translation();
  std::mt19937_64 rng(options.noise_seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      // Unnormalised direction with unit camera z: the ray parameter is depth.
      const Vec3 dir = camera_pose.rotate(k.backproject_unchecked(u, v, 1.0));
      double best = std::numeric_limits<double>::infinity();
      const Primitive* hit = nullptr;
      for (const auto& p : scene.primitives) {
        const auto t = intersect(p, origin, dir);
        if (t && *t < best) {
          best = *t;
          hit = &p;
        }
      }
      if (hit == nullptr || best > options.max_depth) continue;
      double depth = best;
      if (options.noise.a > 0.0 || options.noise.b > 0.0) {
        depth += (options.noise.a + options.noise.b * depth * depth) * gauss(rng);
      }
      if (options.noise.quantise_mm) depth = std::round(depth * 1000.0) / 1000.0;
      if (!(depth > 0.0)) continue;
      f.depth(u, v) = static_cast<float>(depth);
      f.index(u, v) = static_cast<std::uint16_t>(hit->id);

      const Vec3 x = origin + best * dir;
      Vec3 n = primitive_normal(*hit, x);
      if (n.dot(dir) > 0.0) n = -n;
      double shade = 0.25 + 0.75 * std::max(0.0, n.dot(light));
      if (hit->checker) {
        const Vec3 q = hit->pose.inverse() * x;
        const long cx = static_cast<long>(std::floor(q.x() / 0.25));
        const long cy = static_cast<long>(std::floor(q.y() / 0.25));
        if ((cx + cy) % 2 != 0) shade *= 0.55;
      }
      Rgb c;
      for (int ch = 0; ch < 3; ++ch) {
        c[static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(
            std::clamp(std::lround(hit->colour[static_cast<std::size_t>(ch)] * shade), 0L, 255L));
      }
      f.rgb(u, v) = c;
    }
  }
  return f;
}

void TrajectorySpec::validate() const {
  if (keyframes.empty()) throw std::invalid_argument("trajectory has no keyframes");
  for (std::size_t i = 1; i < keyframes.size(); ++i) {
    if (!(keyframes[i].time > keyframes[i - 1].time)) {
      throw std::invalid_argument("keyframe times must be strictly increasing");
    }
  }
  if (frame_count < 0 || !(frame_rate > 0.0)) {
    throw std::invalid_argument("invalid frame count or rate");
  }
}

Pose TrajectorySpec::pose_at(double time) const {
  if (keyframes.empty()) throw std::invalid_argument("trajectory has no keyframes");
  if (time <= keyframes.front().time) return keyframes.front().pose;
  if (time >= keyframes.back().time) return keyframes.back().pose;
  const auto it = std::upper_bound(keyframes.begin(), keyframes.end(), time,
                                   [](double t, const Keyframe& k) { return t < k.time; });
  const Keyframe& b = *it;
  const Keyframe& a = *(it - 1);
  const double s = (time - a.time) / (b.time - a.time);
  if (s == 0.0) return a.pose;
  const Eigen::Quaterniond q = a.pose.quaternion().slerp(s, b.pose.quaternion());
  return Pose::from_quaternion(q, (1.0 - s) * a.pose.translation() + s * b.pose.translation());
}

std::vector<Twist> odometry_noise_twists(const OdometryNoise& noise, int frame_count) {
  std::vector<Twist> out(static_cast<std::size_t>(std::max(frame_count, 0)), Twist::Zero());
  if (!noise.enabled()) return out;
  std::mt19937_64 rng(noise.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (auto& z : out) {
    for (int i = 0; i < 3; ++i) z[i] = noise.sigma_t * gauss(rng);
    for (int i = 3; i < 6; ++i) z[i] = noise.sigma_r * gauss(rng);
  }
  return out;
}

Intrinsics default_synth_camera() { return {262.5, 262.5, 159.5, 119.5, 320, 240}; }

Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) x = z.cross(Vec3::UnitY());
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return {r, eye};
}

namespace {

struct PresetShape {
  int objects;
  int frames;
  double loops;
  double orbit_radius;
  double height;
  double layout_radius;
};

PresetShape preset_shape(const std::string& name) {
  if (name == "loop-small") return {10, 300, 2.0, 1.2, 1.0, 0.85};
  if (name == "loop-tiny") return {4, 60, 1.0, 1.4, 0.9, 0.45};
  throw std::invalid_argument("unknown preset '" + name + "'");
}

const std::vector<std::string> kLabels = {"ball", "box", "crate", "globe", "block"};

const Rgb kPalette[] = {{220, 60, 50},  {60, 160, 80},  {50, 90, 210},  {230, 180, 40},
                        {160, 70, 200}, {40, 190, 200}, {240, 120, 30}, {120, 120, 120},
                        {200, 90, 140}, {90, 200, 120}, {180, 140, 90}, {70, 70, 160}};

}  // namespace

std::vector<std::string> loop_presets() { return {"loop-small", "loop-tiny"}; }

SequenceSpec loop_sequence(const std::string& preset, std::uint64_t seed) {
  const PresetShape shape = preset_shape(preset);
  SequenceSpec seq;
  seq.name = preset;
  seq.seed = seed;
  seq.camera = default_synth_camera();
  seq.scene.label_set = kLabels;

  Primitive floor;
  floor.id = 1;
  floor.shape = Shape::Plane;
  floor.label = "floor";
  floor.is_object = false;
  floor.colour = {190, 180, 165};
  floor.checker = true;
  seq.scene.primitives.push_back(floor);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  struct Placed {
    Vec2 xy;
    double radius;
  };
  std::vector<Placed> placed;
  int attempts = 0;
  int restarts = 0;
  while (static_cast<int>(placed.size()) < shape.objects) {
    if (++attempts > 2000) {
      // Greedy placement dead-ended; start the layout over.
      if (++restarts > 1000) throw std::runtime_error("could not lay out preset scene");
      attempts = 0;
      placed.clear();
      seq.scene.primitives.resize(1);
    }
    const bool sphere = unit(rng) < 0.4;
    Primitive p;
    p.id = static_cast<int>(placed.size()) + 2;
    p.shape = sphere ? Shape::Sphere : Shape::Box;
    double footprint = 0.0;
    double z = 0.0;
    double yaw = 0.0;
    if (sphere) {
      const double r = 0.17 + 0.05 * unit(rng);
      p.dims = Vec3(r, r, r);
      footprint = r;
      z = r;
      p.label = unit(rng) < 0.5 ? "ball" : "globe";
    } else {
      p.dims = Vec3(0.12 + 0.08 * unit(rng), 0.12 + 0.08 * unit(rng), 0.1 + 0.1 * unit(rng));
      footprint = p.dims.head<2>().norm();
      z = p.dims.z();
      yaw = 2.0 * std::numbers::pi * unit(rng);
      const double pick = unit(rng);
      p.label = pick < 0.34 ? "box" : (pick < 0.67 ? "crate" : "block");
    }
    const double rad = shape.layout_radius * std::sqrt(unit(rng));
    const double ang = 2.0 * std::numbers::pi * unit(rng);
    const Vec2 xy(rad * std::cos(ang), rad * std::sin(ang));
    bool clash = false;
    for (const auto& q : placed) {
      if ((q.xy - xy).norm() < q.radius + footprint + 0.08) clash = true;
    }
    if (clash) continue;
    placed.push_back({xy, footprint});
    p.pose = Pose(so3_exp(Vec3(0, 0, yaw)), Vec3(xy.x(), xy.y(), z));
    p.colour = kPalette[placed.size() % std::size(kPalette)];
    seq.scene.primitives.push_back(p);
  }

  // Orbit the layout; the closed-form path makes the last frame coincide with
  // the first, so the second loop revisits every viewpoint.
  auto& traj = seq.trajectory;
  traj.frame_count = shape.frames;
  traj.frame_rate = 30.0;
  const int key_every = 5;
  const double phase = 2.0 * std::numbers::pi * unit(rng);
  for (int f = 0; f < shape.frames; f += key_every) {
    const int frame = std::min(f, shape.frames - 1);
    const double s = static_cast<double>(frame) / (shape.frames - 1);
    const double theta = phase + 2.0 * std::numbers::pi * shape.loops * s;
    const double wobble = std::sin(2.0 * std::numbers::pi * shape.loops * s * 1.5);
    const Vec3 eye(shape.orbit_radius * std::cos(theta), shape.orbit_radius * std::sin(theta),
                   shape.height + 0.08 * wobble);
    const Vec3 target(0.1 * std::cos(2 * theta), 0.1 * std::sin(theta), 0.15);
    traj.keyframes.push_back({frame / traj.frame_rate, look_at(eye, target)});
  }
  if (traj.keyframes.back().time < (shape.frames - 1) / traj.frame_rate - 1e-12) {
    const double theta = phase + 2.0 * std::numbers::pi * shape.loops;
    const Vec3 eye(shape.orbit_radius * std::cos(theta), shape.orbit_radius * std::sin(theta),
                   shape.height + 0.08 * std::sin(2.0 * std::numbers::pi * shape.loops * 1.5));
    const Vec3 target(0.1 * std::cos(2 * theta), 0.1 * std::sin(theta), 0.15);
    traj.keyframes.push_back({(shape.frames - 1) / traj.frame_rate, look_at(eye, target)});
  }
  traj.odometry_noise.seed = seed ^ 0x9e3779b97f4a7c15ULL;

  seq.render.max_depth = 8.0;
  seq.render.noise = DepthNoise{0.0005, 0.0015, true};
  seq.scene.validate();
  traj.validate();
  return seq;
}

SynthFrame render_sequence_frame(const SequenceSpec& seq, int frame) {
  RenderOptions opt = seq.render;
  opt.noise_seed = seq.seed * 1000003ULL + static_cast<std::uint64_t>(frame) + 17ULL;
  return render_synth(seq.scene, seq.trajectory.frame_pose(frame), seq.camera, opt);
}

std::vector<Landmark> scene_landmarks(const SceneSpec& scene, int per_object,
                                      std::uint64_t seed) {
  std::vector<Landmark> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (const auto& p : scene.primitives) {
    if (!p.is_object) continue;
    for (int n = 0; n < per_object; ++n) {
      Vec3 local;
      if (p.shape == Shape::Sphere) {
        // Fibonacci lattice: even coverage, deterministic.
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        const double zc = 1.0 - 2.0 * (n + 0.5) / per_object;
        const double rr = std::sqrt(1.0 - zc * zc);
        local = p.dims.x() * Vec3(rr * std::cos(golden * n), rr * std::sin(golden * n), zc);
      } else {
        const Vec3& h = p.dims;
        const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
        const double total = areas[0] + areas[1] + areas[2];
        const double pick = unit(rng) * total;
        const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
        for (int a = 0; a < 3; ++a) local[a] = (2.0 * unit(rng) - 1.0) * h[a];
        local[axis] = unit(rng) < 0.5 ? -h[axis] : h[axis];
      }
      const Vec3 w = p.pose * local;
      out.push_back({static_cast<std::uint64_t>(p.id) * 10000ULL + static_cast<std::uint64_t>(n),
                     p.id, w, primitive_normal(p, w)});
    }
  }
  return out;
}

namespace {

using nlohmann::json;

json pose_json(const Pose& p) {
  const auto q = p.quaternion();
  return {{"position", {p.translation().x(), p.translation().y(), p.translation().z()}},
          {"quaternion", {q.x(), q.y(), q.z(), q.w()}}};
}

Pose pose_from_json(const json& j) {
  const auto& t = j.at("position");
  const auto& q = j.at("quaternion");
  return Pose::from_quaternion(
      Eigen::Quaterniond(q.at(3).get<double>(), q.at(0).get<double>(), q.at(1).get<double>(),
                         q.at(2).get<double>()),
      Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()));
}

json read_json(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path.string() + " for writing");
  f << j.dump(2) << '\n';
}

}  // namespace

void save_scene(const SceneSpec& scene, const std::filesystem::path& path) {
  json prims = json::array();
  for (const auto& p : scene.primitives) {
    json j = pose_json(p.pose);
    j["id"] = p.id;
    j["shape"] = to_string(p.shape);
    j["dimensions"] = {p.dims.x(), p.dims.y(), p.dims.z()};
    j["label"] = p.label;
    j["object"] = p.is_object;
    j["colour"] = {p.colour[0], p.colour[1], p.colour[2]};
    j["checker"] = p.checker;
    prims.push_back(j);
  }
  write_json({{"labels", scene.label_set}, {"primitives", prims}}, path);
}

SceneSpec load_scene(const std::filesystem::path& path) {
  const json j = read_json(path);
  SceneSpec s;
  try {
    s.label_set = j.at("labels").get<std::vector<std::string>>();
    for (const auto& pj : j.at("primitives")) {
      Primitive p;
      p.id = pj.at("id").get<int>();
      p.shape = shape_from_string(pj.at("shape").get<std::string>());
      p.pose = pose_from_json(pj);
      const auto& d = pj.at("dimensions");
      p.dims = Vec3(d.at(0).get<double>(), d.at(1).get<double>(), d.at(2).get<double>());
      p.label = pj.value("label", std::string{});
      p.is_object = pj.value("object", p.shape != Shape::Plane);
      if (pj.contains("colour")) {
        const auto& c = pj.at("colour");
        p.colour = {c.at(0).get<std::uint8_t>(), c.at(1).get<std::uint8_t>(),
                    c.at(2).get<std::uint8_t>()};
      }
      p.checker = pj.value("checker", false);
      s.primitives.push_back(p);
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  s.validate();
  return s;
}

void save_trajectory(const TrajectorySpec& traj, const std::filesystem::path& path) {
  json keys = json::array();
  for (const auto& k : traj.keyframes) {
    json j = pose_json(k.pose);
    j["time"] = k.time;
    keys.push_back(j);
  }
  write_json({{"frame_count", traj.frame_count},
              {"frame_rate", traj.frame_rate},
              {"odometry_noise",
               {{"sigma_t", traj.odometry_noise.sigma_t},
                {"sigma_r", traj.odometry_noise.sigma_r},
                {"seed", traj.odometry_noise.seed}}},
              {"keyframes", keys}},
             path);
}

TrajectorySpec load_trajectory(const std::filesystem::path& path) {
  const json j = read_json(path);
  TrajectorySpec t;
  try {
    t.frame_count = j.at("frame_count").get<int>();
    t.frame_rate = j.value("frame_rate", 30.0);
    if (j.contains("odometry_noise")) {
      const auto& n = j.at("odometry_noise");
      t.odometry_noise.sigma_t = n.value("sigma_t", 0.0);
      t.odometry_noise.sigma_r = n.value("sigma_r", 0.0);
      t.odometry_noise.seed = n.value("seed", std::uint64_t{0});
    }
    for (const auto& kj : j.at("keyframes")) {
      t.keyframes.push_back({kj.at("time").get<double>(), pose_from_json(kj)});
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
  t.validate();
  return t;
}

}  // namespace objslam
