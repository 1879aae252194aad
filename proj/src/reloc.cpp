#include "objslam/reloc.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <tuple>

namespace objslam {

// ---------------------------------------------------------------- matching

MatchList match_exact(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b) {
  std::map<Descriptor, int> index;
  for (int j = 0; j < static_cast<int>(b.size()); ++j) index.emplace(b[j], j);
  MatchList out;
  for (int i = 0; i < static_cast<int>(a.size()); ++i) {
    if (auto it = index.find(a[i]); it != index.end()) out.emplace_back(i, it->second);
  }
  return out;
}

// ------------------------------------------------------------ Harris/BRIEF

namespace {

Image<float> to_grey(const RgbImage& rgb) {
  Image<float> g(rgb.width(), rgb.height());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const auto& c = rgb[i];
    g[i] = 0.299f * c[0] + 0.587f * c[1] + 0.114f * c[2];
  }
  return g;
}

// Separable [1 4 6 4 1]/16 blur with clamped borders.
Image<float> binomial_blur(const Image<float>& in) {
  static constexpr float k[5] = {1 / 16.f, 4 / 16.f, 6 / 16.f, 4 / 16.f, 1 / 16.f};
  const int w = in.width(), h = in.height();
  Image<float> tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.f;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * in(std::clamp(x + i, 0, w - 1), y);
      tmp(x, y) = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float s = 0.f;
      for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp(x, std::clamp(y + i, 0, h - 1));
      out(x, y) = s;
    }
  }
  return out;
}

int hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a[i] ^ b[i]);
  return d;
}

}  // namespace

HarrisBrief::HarrisBrief(HarrisBriefParams params) : params_(params) {
  std::mt19937_64 rng(params_.pattern_seed);
  std::normal_distribution<double> n(0.0, (2 * kPatchRadius + 1) / 5.0);
  auto coord = [&] {
    return std::clamp(static_cast<int>(std::lround(n(rng))), -kPatchRadius, kPatchRadius);
  };
  pattern_.resize(256);
  for (auto& p : pattern_) p = {coord(), coord(), coord(), coord()};
}

std::vector<Keypoint> HarrisBrief::detect(const FeatureFrame& frame) const {
  if (frame.rgb == nullptr || frame.depth == nullptr) {
    throw std::invalid_argument("Harris/BRIEF features need colour and depth");
  }
  const Image<float> grey = binomial_blur(to_grey(*frame.rgb));
  const int w = grey.width(), h = grey.height();
  Image<float> ixx(w, h, 0.f), iyy(w, h, 0.f), ixy(w, h, 0.f);
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const float gx = 0.125f * (grey(x + 1, y - 1) + 2 * grey(x + 1, y) + grey(x + 1, y + 1) -
                                 grey(x - 1, y - 1) - 2 * grey(x - 1, y) - grey(x - 1, y + 1));
      const float gy = 0.125f * (grey(x - 1, y + 1) + 2 * grey(x, y + 1) + grey(x + 1, y + 1) -
                                 grey(x - 1, y - 1) - 2 * grey(x, y - 1) - grey(x + 1, y - 1));
      ixx(x, y) = gx * gx;
      iyy(x, y) = gy * gy;
      ixy(x, y) = gx * gy;
    }
  }
  ixx = binomial_blur(ixx);
  iyy = binomial_blur(iyy);
  ixy = binomial_blur(ixy);
  Image<float> score(w, h, 0.f);
  for (std::size_t i = 0; i < score.size(); ++i) {
    const double det = double(ixx[i]) * iyy[i] - double(ixy[i]) * ixy[i];
    const double tr = double(ixx[i]) + iyy[i];
    score[i] = static_cast<float>(det - params_.harris_k * tr * tr);
  }
  struct Cand {
    float s;
    int x, y;
  };
  std::vector<Cand> cands;
  const int border = kPatchRadius + 1;
  const int r = params_.nms_radius;
  for (int y = border; y < h - border; ++y) {
    for (int x = border; x < w - border; ++x) {
      const float s = score(x, y);
      if (s < params_.threshold || !valid_depth((*frame.depth)(x, y))) continue;
      bool is_max = true;
      for (int dy = -r; dy <= r && is_max; ++dy) {
        for (int dx = -r; dx <= r; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const float o = score(x + dx, y + dy);
          // Equal neighbours: the earlier pixel in raster order wins.
          if (o > s || (o == s && (dy < 0 || (dy == 0 && dx < 0)))) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) cands.push_back({s, x, y});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.s > b.s; });
  if (cands.size() > static_cast<std::size_t>(params_.max_keypoints)) {
    cands.resize(static_cast<std::size_t>(params_.max_keypoints));
  }
  std::vector<Keypoint> out;
  for (const auto& c : cands) {
    Keypoint k;
    k.pixel = Vec2(c.x, c.y);
    k.point = frame.camera.backproject_unchecked(c.x, c.y, (*frame.depth)(c.x, c.y));
    for (int b = 0; b < 256; ++b) {
      const auto& p = pattern_[b];
      if (grey(c.x + p[0], c.y + p[1]) < grey(c.x + p[2], c.y + p[3])) {
        k.descriptor[b / 64] |= std::uint64_t{1} << (b % 64);
      }
    }
    out.push_back(k);
  }
  return out;
}

MatchList HarrisBrief::match(const std::vector<Descriptor>& a,
                             const std::vector<Descriptor>& b) const {
  // Best and second-best neighbour of each query; ties keep the lower index.
  auto nearest = [](const Descriptor& q, const std::vector<Descriptor>& set) {
    int best = 1 << 30, second = 1 << 30, best_j = -1;
    for (int j = 0; j < static_cast<int>(set.size()); ++j) {
      const int d = hamming(q, set[j]);
      if (d < best) {
        second = best;
        best = d;
        best_j = j;
      } else if (d < second) {
        second = d;
      }
    }
    return std::tuple{best_j, best, second};
  };
  MatchList out;
  for (int i = 0; i < static_cast<int>(a.size()); ++i) {
    const auto [j, best, second] = nearest(a[i], b);
    if (j < 0 || best > params_.max_hamming || !(best < params_.ratio * second)) continue;
    // Mutual check: a[i] must also be the closest descriptor to b[j].
    if (std::get<0>(nearest(b[j], a)) != i) continue;
    out.emplace_back(i, j);
  }
  return out;
}

// ------------------------------------------------------------ oracle/file

OracleFeatures::OracleFeatures(const SequenceSpec& sequence, int per_object)
    : sequence_(&sequence), landmarks_(scene_landmarks(sequence.scene, per_object)) {}

std::vector<Keypoint> OracleFeatures::detect(const FeatureFrame& frame) const {
  if (frame.depth == nullptr) throw std::invalid_argument("oracle features need depth");
  const Pose t_cw = sequence_->trajectory.frame_pose(frame.index).inverse();
  const Vec3 eye = t_cw.inverse().translation();
  std::vector<Keypoint> out;
  for (const auto& lm : landmarks_) {
    if (lm.normal.dot(eye - lm.position) <= 0.0) continue;
    const Vec3 pc = t_cw * lm.position;
    if (pc.z() <= 0.0) continue;
    const Vec2 u = frame.camera.project_unchecked(pc);
    const int x = static_cast<int>(std::floor(u.x() + 0.5));
    const int y = static_cast<int>(std::floor(u.y() + 0.5));
    if (!frame.depth->in_bounds(x, y)) continue;
    const float d = (*frame.depth)(x, y);
    // Occluded unless the measured surface is where the landmark is.
    if (!valid_depth(d) || std::abs(d - pc.z()) > 0.01 + 0.01 * pc.z()) continue;
    Keypoint k;
    k.pixel = u;
    k.point = frame.camera.backproject_unchecked(u.x(), u.y(), d);
    k.descriptor[0] = lm.id;
    out.push_back(k);
  }
  return out;
}

std::vector<Keypoint> FileFeatures::detect(const FeatureFrame& frame) const {
  if (frame.depth == nullptr) throw std::invalid_argument("file features need depth");
  const auto path = dir_ / (std::to_string(frame.index) + ".txt");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open feature file " + path.string());
  std::vector<Keypoint> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Keypoint k;
    ls >> k.pixel.x() >> k.pixel.y() >> std::hex >> k.descriptor[0] >> k.descriptor[1] >>
        k.descriptor[2] >> k.descriptor[3];
    if (!ls) {
      throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                               ": expected 'u v d0 d1 d2 d3'");
    }
    const int x = static_cast<int>(std::floor(k.pixel.x() + 0.5));
    const int y = static_cast<int>(std::floor(k.pixel.y() + 0.5));
    if (!frame.depth->in_bounds(x, y) || !valid_depth((*frame.depth)(x, y))) continue;
    k.point = frame.camera.backproject_unchecked(k.pixel.x(), k.pixel.y(), (*frame.depth)(x, y));
    out.push_back(k);
  }
  return out;
}

void write_feature_file(const std::filesystem::path& path, const std::vector<Keypoint>& kps) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write feature file " + path.string());
  char buf[160];
  for (const auto& k : kps) {
    std::snprintf(buf, sizeof buf, "%.6f %.6f %llx %llx %llx %llx\n", k.pixel.x(), k.pixel.y(),
                  static_cast<unsigned long long>(k.descriptor[0]),
                  static_cast<unsigned long long>(k.descriptor[1]),
                  static_cast<unsigned long long>(k.descriptor[2]),
                  static_cast<unsigned long long>(k.descriptor[3]));
    out << buf;
  }
}

// --------------------------------------------------------------- snapshots

bool SnapshotStore::maybe_add(int object_id, const Pose& t_wo, const Pose& t_wc,
                              const std::vector<Keypoint>& keypoints,
                              const std::vector<double>& class_dist) {
  const Pose t_oc = t_wo.inverse() * t_wc;
  const Vec3 cam = t_oc.translation();
  if (!(cam.norm() > 0.0)) return false;
  const Vec3 dir = cam.normalized();
  const double min_cos = std::cos(min_angle_deg_ * std::numbers::pi / 180.0);
  auto& list = by_object_[object_id];
  for (const auto& s : list) {
    if (s.view_direction.dot(dir) > min_cos) return false;
  }
  Snapshot snap;
  snap.object_id = object_id;
  snap.view_direction = dir;
  snap.camera_position = cam;
  snap.class_dist = class_dist;
  for (const auto& k : keypoints) {
    snap.points.push_back(t_oc * k.point);
    snap.descriptors.push_back(k.descriptor);
  }
  list.push_back(std::move(snap));
  return true;
}

void SnapshotStore::remove_object(int object_id) { by_object_.erase(object_id); }

void SnapshotStore::recentre_object(int object_id, const Pose& new_from_old) {
  auto it = by_object_.find(object_id);
  if (it == by_object_.end()) return;
  for (auto& s : it->second) {
    for (auto& p : s.points) p = new_from_old * p;
    s.camera_position = new_from_old * s.camera_position;
    s.view_direction = s.camera_position.normalized();
  }
}

const std::vector<Snapshot>& SnapshotStore::snapshots(int object_id) const {
  static const std::vector<Snapshot> empty;
  auto it = by_object_.find(object_id);
  return it == by_object_.end() ? empty : it->second;
}

std::vector<int> SnapshotStore::object_ids() const {
  std::vector<int> ids;
  for (const auto& [id, list] : by_object_) {
    if (!list.empty()) ids.push_back(id);
  }
  return ids;
}

std::size_t SnapshotStore::size() const {
  std::size_t n = 0;
  for (const auto& [id, list] : by_object_) n += list.size();
  return n;
}

namespace {

constexpr char kSnapshotMagic[4] = {'O', 'S', 'N', 'P'};
constexpr std::uint32_t kSnapshotVersion = 1;

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw std::runtime_error("truncated snapshot store");
  }
  return v;
}
void put_vec3(std::ostream& os, const Vec3& v) {
  for (int i = 0; i < 3; ++i) put(os, v[i]);
}
Vec3 get_vec3(std::istream& is) {
  Vec3 v;
  for (int i = 0; i < 3; ++i) v[i] = get<double>(is);
  return v;
}

}  // namespace

// Native little-endian layout: magic, version, min angle, snapshot count,
// then per snapshot: id, view direction, camera position, class
// distribution, and (point, descriptor) pairs.
void SnapshotStore::write(std::ostream& os) const {
  os.write(kSnapshotMagic, 4);
  put(os, kSnapshotVersion);
  put(os, min_angle_deg_);
  put(os, static_cast<std::uint64_t>(size()));
  for (const auto& [id, list] : by_object_) {
    for (const auto& s : list) {
      put(os, static_cast<std::int32_t>(s.object_id));
      put_vec3(os, s.view_direction);
      put_vec3(os, s.camera_position);
      put(os, static_cast<std::uint32_t>(s.class_dist.size()));
      for (double p : s.class_dist) put(os, p);
      put(os, static_cast<std::uint32_t>(s.points.size()));
      for (std::size_t i = 0; i < s.points.size(); ++i) {
        put_vec3(os, s.points[i]);
        for (auto word : s.descriptors[i]) put(os, word);
      }
    }
  }
}

SnapshotStore SnapshotStore::read(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kSnapshotMagic)) {
    throw std::runtime_error("not a snapshot store");
  }
  if (get<std::uint32_t>(is) != kSnapshotVersion) {
    throw std::runtime_error("unsupported snapshot store version");
  }
  SnapshotStore store(get<double>(is));
  const auto count = get<std::uint64_t>(is);
  for (std::uint64_t n = 0; n < count; ++n) {
    Snapshot s;
    s.object_id = get<std::int32_t>(is);
    s.view_direction = get_vec3(is);
    s.camera_position = get_vec3(is);
    s.class_dist.resize(get<std::uint32_t>(is));
    for (double& p : s.class_dist) p = get<double>(is);
    const auto points = get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < points; ++i) {
      s.points.push_back(get_vec3(is));
      Descriptor d;
      for (auto& word : d) word = get<std::uint64_t>(is);
      s.descriptors.push_back(d);
    }
    store.by_object_[s.object_id].push_back(std::move(s));
  }
  return store;
}

void SnapshotStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write(out);
}

SnapshotStore SnapshotStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return read(in);
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// ----------------------------------------------------------- registration

std::optional<Pose> try_estimate_rigid_3d3d(const std::vector<Vec3>& src,
                                            const std::vector<Vec3>& dst) {
  if (src.size() != dst.size() || src.size() < 3) return std::nullopt;
  const auto n = static_cast<Eigen::Index>(src.size());
  Eigen::Matrix3Xd a(3, n), b(3, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    a.col(i) = src[i];
    b.col(i) = dst[i];
  }
  // Collinear (or coincident) sources leave a rotation about their line free.
  const Eigen::Matrix3Xd centred = a.colwise() - a.rowwise().mean();
  const Eigen::SelfAdjointEigenSolver<Mat3> es(centred * centred.transpose(),
                                               Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues()(2);
  if (!(top > 0.0) || es.eigenvalues()(1) < 1e-10 * top) return std::nullopt;
  return Pose::from_matrix(Eigen::umeyama(a, b, false));
}

Pose estimate_rigid_3d3d(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() != dst.size()) throw std::invalid_argument("point sets differ in size");
  if (src.size() < 3) throw std::invalid_argument("rigid fit needs at least 3 points");
  auto pose = try_estimate_rigid_3d3d(src, dst);
  if (!pose) throw std::invalid_argument("degenerate (collinear) point set");
  return *pose;
}

namespace {

std::vector<int> inliers_of(const Pose& t, const std::vector<Vec3>& src,
                            const std::vector<Vec3>& dst, double threshold) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(src.size()); ++i) {
    if ((t * src[i] - dst[i]).norm() < threshold) out.push_back(i);
  }
  return out;
}

}  // namespace

RansacResult ransac_rigid(const std::vector<Vec3>& src, const std::vector<Vec3>& dst,
                          const RansacParams& params) {
  if (src.size() != dst.size()) throw std::invalid_argument("point sets differ in size");
  RansacResult result;
  const int n = static_cast<int>(src.size());
  if (n < 3) return result;
  std::mt19937_64 rng(params.seed);
  std::uniform_int_distribution<int> pick(0, n - 1);
  std::optional<Pose> best;
  for (int it = 0; it < params.iterations; ++it) {
    int s[3];
    s[0] = pick(rng);
    do s[1] = pick(rng); while (s[1] == s[0]);
    do s[2] = pick(rng); while (s[2] == s[0] || s[2] == s[1]);
    const auto pose = try_estimate_rigid_3d3d({src[s[0]], src[s[1]], src[s[2]]},
                                              {dst[s[0]], dst[s[1]], dst[s[2]]});
    if (!pose) continue;
    auto in = inliers_of(*pose, src, dst, params.threshold);
    if (in.size() > result.inliers.size()) {
      result.inliers = std::move(in);
      best = pose;
    }
  }
  if (!best) return result;
  // Refit on the consensus set until it stops growing.
  for (int round = 0; round < 10; ++round) {
    std::vector<Vec3> a, b;
    for (int i : result.inliers) {
      a.push_back(src[i]);
      b.push_back(dst[i]);
    }
    const auto refit = try_estimate_rigid_3d3d(a, b);
    if (!refit) break;
    auto in = inliers_of(*refit, src, dst, params.threshold);
    if (in.size() < result.inliers.size()) break;
    best = refit;
    const bool same = in == result.inliers;
    result.inliers = std::move(in);
    if (same) break;
  }
  if (static_cast<int>(result.inliers.size()) >= params.min_inliers) result.pose = best;
  return result;
}

// --------------------------------------------------------- relocalisation

std::string to_string(RelocFailure f) {
  switch (f) {
    case RelocFailure::None: return "ok";
    case RelocFailure::NoCandidates: return "no-candidates";
    case RelocFailure::PerObjectFail: return "per-object-fail";
    case RelocFailure::JointFail: return "joint-fail";
  }
  return "unknown";
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

RelocResult relocalize(const SnapshotStore& store, const std::vector<Keypoint>& frame,
                       const std::map<int, RelocObject>& objects,
                       const std::vector<std::vector<double>>& detections,
                       const FeatureInterface& features, const RelocParams& params) {
  RelocResult result;
  std::vector<Descriptor> frame_desc;
  for (const auto& k : frame) frame_desc.push_back(k.descriptor);

  std::vector<Vec3> joint_src, joint_dst;  // world points, camera points
  bool any_candidate = false;
  for (int id : store.object_ids()) {
    const auto obj = objects.find(id);
    if (obj == objects.end()) continue;
    // No detections this frame (e.g. lost between detection frames): every
    // object with snapshots stays a candidate.
    if (!detections.empty()) {
      const bool pass = std::any_of(detections.begin(), detections.end(), [&](const auto& d) {
        return dot(obj->second.class_dist, d) > params.class_gate;
      });
      if (!pass) continue;
    }
    any_candidate = true;
    std::vector<Vec3> pts;
    std::vector<Descriptor> desc;
    for (const auto& s : store.snapshots(id)) {
      pts.insert(pts.end(), s.points.begin(), s.points.end());
      desc.insert(desc.end(), s.descriptors.begin(), s.descriptors.end());
    }
    std::vector<Vec3> src, dst;
    for (const auto& [i, j] : features.match(desc, frame_desc)) {
      src.push_back(pts[i]);
      dst.push_back(frame[j].point);
    }
    RansacParams rp = params.per_object;
    rp.seed += static_cast<std::uint64_t>(id);
    if (!ransac_rigid(src, dst, rp).pose) continue;
    result.matched_objects.push_back(id);
    for (std::size_t i = 0; i < src.size(); ++i) {
      joint_src.push_back(obj->second.t_wo * src[i]);
      joint_dst.push_back(dst[i]);
    }
  }
  if (!any_candidate) {
    result.failure = RelocFailure::NoCandidates;
    return result;
  }
  if (result.matched_objects.empty()) {
    result.failure = RelocFailure::PerObjectFail;
    return result;
  }
  const RansacResult joint = ransac_rigid(joint_src, joint_dst, params.joint);
  result.joint_inliers = static_cast<int>(joint.inliers.size());
  if (!joint.pose) {
    result.failure = RelocFailure::JointFail;
    return result;
  }
  result.camera_pose = joint.pose->inverse();  // fitted T_CW
  result.failure = RelocFailure::None;
  return result;
}

}  // namespace objslam
