#include "objslam/pipeline.hpp"

#include "objslam/mesh.hpp"

#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <type_traits>

namespace objslam {

// --- Config -------------------------------------------------------------------

namespace {

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "1" : "0";
  } else if constexpr (std::is_floating_point_v<T>) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
  } else {
    return std::to_string(v);
  }
}

template <typename T>
bool parse_value(const std::string& text, T& out) {
  std::istringstream is(text);
  if constexpr (std::is_same_v<T, bool>) {
    int v = 0;
    if (!(is >> v) || (v != 0 && v != 1)) return false;
    out = v == 1;
  } else if constexpr (std::is_unsigned_v<T>) {
    if (text.find('-') != std::string::npos) return false;
    if (!(is >> out)) return false;
  } else {
    if (!(is >> out)) return false;
  }
  is >> std::ws;
  return is.eof();
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Keys whose value may legitimately be zero.
const std::set<std::string>& zero_allowed() {
  static const std::set<std::string> keys{
      "objects.erosion_radius", "filter.radius", "reloc.object_seed", "reloc.joint_seed",
      "pipeline.seed", "graph.min_relative_decrease", "graph.min_step", "detection.border",
      "detection.min_area", "detection.min_probability", "association.threshold",
      "gate.min_valid_fraction", "existence.min_visible_pixels", "existence.deletion_threshold",
      "icp.lost_instance_coverage", "icp.lost_valid_fraction", "raycast.background_margin",
      "objects.lower_percentile"};
  return keys;
}

}  // namespace

void PipelineConfig::validate() const {
  visit(*this, [](const char* key, const auto& v, const char*) {
    using T = std::decay_t<decltype(v)>;
    if constexpr (std::is_same_v<T, bool>) {
      return;
    } else {
      if constexpr (std::is_floating_point_v<T>) {
        if (!std::isfinite(v)) throw std::invalid_argument(std::string("config ") + key + ": not finite");
      }
      if (v < T{0} || (v == T{0} && !zero_allowed().count(key)))
        throw std::invalid_argument(std::string("config ") + key + ": must be positive");
    }
  });
  auto fail = [](const std::string& what) { throw std::invalid_argument("config " + what); };
  if (objects.lower_percentile >= objects.upper_percentile || objects.upper_percentile > 100.0)
    fail("objects percentiles must satisfy lower < upper <= 100");
  if (objects.initial_resolution > objects.max_resolution)
    fail("objects.initial_resolution exceeds objects.max_resolution");
  if (objects.initial_resolution % 2 || objects.max_resolution % 2)
    fail("object resolutions must be even");
  if (objects.min_object_size >= objects.max_object_size) fail("objects.min_size >= objects.max_size");
  if (raycast.min_range >= raycast.max_range) fail("raycast.min_range >= raycast.max_range");
  if (icp.normal_threshold > 1.0) fail("icp.normal_threshold exceeds 1");
  if (graph.lambda_up <= 1.0 || graph.lambda_down >= 1.0) fail("graph lambda factors must grow/shrink");
}

void PipelineConfig::write(std::ostream& os) const {
  visit(*this, [&](const char* key, const auto& v, const char* doc) {
    os << "# " << doc << '\n' << key << " = " << format_value(v) << '\n';
  });
}

void PipelineConfig::set(const std::string& key, const std::string& value) {
  bool found = false;
  visit(*this, [&](const char* k, auto& v, const char*) {
    if (key != k) return;
    found = true;
    if (!parse_value(value, v))
      throw std::invalid_argument("config " + key + ": cannot parse '" + value + "'");
  });
  if (!found) throw std::invalid_argument("config: unknown key '" + key + "'");
}

PipelineConfig PipelineConfig::read(std::istream& is, const std::string& name) {
  PipelineConfig c;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(name + ": line " + std::to_string(line_no) + ": expected key = value");
    try {
      c.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(name + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  c.validate();
  return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read(is, path.string());
}

void PipelineConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  write(os);
  if (!os) throw std::runtime_error("cannot write " + path.string());
}

// --- Pipeline -----------------------------------------------------------------

std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Running: return "running";
    case RunStatus::Completed: return "completed";
    case RunStatus::AbortedLost: return "aborted-lost";
  }
  return "?";
}

struct Pipeline::DetectionContext {
  int frame = 0;
  Pose pose;      // final estimate for the frame
  Pose icp_pose;  // linearisation point of `systems`
  DepthImage depth;
  std::optional<RgbImage> rgb;
  std::map<int, TargetSystem> systems;
};

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

}  // namespace

Pipeline::Pipeline(PipelineConfig config, Intrinsics camera, std::shared_ptr<const MaskSource> masks,
                   std::shared_ptr<const FeatureInterface> features, std::ostream* stats)
    : config_(std::move(config)),
      camera_(camera),
      masks_(std::move(masks)),
      features_(std::move(features)),
      stats_(stats),
      snapshots_(config_.snapshot_min_angle) {
  config_.validate();
  camera_.validate();
  if (masks_ && config_.async_masks) async_ = std::make_unique<AsyncMaskSource>(masks_);
}

Pipeline::~Pipeline() = default;

std::vector<const ObjectVolume*> Pipeline::object_list() const {
  std::vector<const ObjectVolume*> out;
  for (const auto& [id, o] : objects_) out.push_back(&o);
  return out;
}

RenderedMaps Pipeline::render(const Pose& pose) const {
  const auto objs = object_list();
  return raycast_layered(objs, &background_->volume, pose, camera_, config_.raycast, exec());
}

bool Pipeline::inventory_consistent() const {
  for (const auto& [id, o] : objects_)
    if (!graph_.has_node(object_key(id))) return false;
  for (const auto& n : graph_.nodes())
    if (n.key.kind == NodeKind::Object && !objects_.count(n.key.id)) return false;
  return true;
}

void Pipeline::remove_object(int id) {
  objects_.erase(id);
  if (graph_.has_node(object_key(id))) graph_.remove_object(id);
  snapshots_.remove_object(id);
}

void Pipeline::add_camera_node(int frame, const Pose& state, const Pose& icp_pose,
                               const std::map<int, TargetSystem>& systems) {
  if (graph_.has_node(camera_key(frame))) return;
  const auto prev = graph_.last_camera();
  graph_.add_camera_node(frame, state);
  for (const auto& [id, ts] : systems) {
    std::optional<NodeKey> from;
    Pose target;
    if (id == kBackgroundIndex) {
      if (!prev) continue;
      from = *prev;
      target = graph_.node(*prev).state;
    } else {
      if (!graph_.has_node(object_key(id))) continue;
      from = object_key(id);
      target = objects_.at(id).pose();
    }
    const auto vm = make_virtual_measurement(ts.system.jtj, ts.system.jtr, ts.system.residual_count,
                                             icp_pose, target, config_.icp.max_condition);
    if (vm) graph_.add_edge({*from, camera_key(frame), vm->measurement, vm->information});
  }
}

void Pipeline::optimise(FrameReport& report) {
  const auto last = graph_.last_camera();
  if (!last || graph_.edges().empty()) return;
  const Pose before = graph_.node(*last).state;
  const auto rep = graph_.optimize(config_.graph);
  for (auto& [id, o] : objects_)
    if (graph_.has_node(object_key(id))) o.volume.pose = graph_.node(object_key(id)).state;
  pose_ = graph_.node(*last).state * before.inverse() * pose_;
  char buf[160];
  std::snprintf(buf, sizeof buf, "optimise: %.6g -> %.6g in %d iterations (%s)", rep.initial_error,
                rep.final_error, rep.iterations, rep.stop_reason.c_str());
  report.events.emplace_back(buf);
}

std::optional<std::vector<Detection>> Pipeline::fetch_detections(int frame) {
  if (!masks_ || async_) return std::nullopt;
  return masks_->detections_for(frame);
}

void Pipeline::handle_detections(const DetectionContext& ctx, std::vector<Detection> raw,
                                 FrameReport& report) {
  const auto& depth = ctx.depth;
  const Pose& pose = ctx.pose;
  const auto mode = config_.semantic_product ? SemanticFusion::Multiplicative : SemanticFusion::Average;

  const auto dets = filter_detections(std::move(raw), config_.detection);
  const RenderedMaps maps = render(pose);
  const auto assoc = associate(dets, render_instance_masks(maps), config_.association_threshold);

  for (const auto& [id, det] : assoc.matched) {
    auto& o = objects_.at(id);
    fuse_foreground(o, det.mask, depth, pose, camera_, exec());
    fuse_semantics(o, det.class_dist, mode);
    ++o.detection_count;
  }

  std::vector<int> ids;
  for (const auto& [id, o] : objects_) ids.push_back(id);
  for (int id : ids) {
    const auto c = maps.counts.find(id);
    const int visible = c == maps.counts.end() ? 0 : c->second;
    if (update_existence(objects_.at(id), visible, assoc.matched.count(id) > 0, config_.existence) ==
        ExistenceDecision::Delete) {
      remove_object(id);
      report.events.push_back("delete object " + std::to_string(id));
    }
  }

  std::map<int, const Detection*> observed;
  for (const auto& [id, det] : assoc.matched)
    if (objects_.count(id)) observed[id] = &det;

  for (const auto& det : assoc.unmatched) {
    const auto existing = object_list();
    auto out = init_object(det.mask, depth, pose, camera_, existing, config_.objects, next_object_id_);
    if (!out.volume) {
      report.events.push_back("init rejected: " + to_string(out.rejection));
      continue;
    }
    ObjectVolume& o = objects_.emplace(next_object_id_, std::move(*out.volume)).first->second;
    integrate_object(o, depth, pose, camera_, nullptr, config_.gate, exec());
    fuse_foreground(o, det.mask, depth, pose, camera_, exec());
    fuse_semantics(o, det.class_dist, mode);
    o.detection_count = 1;
    graph_.add_object_node(o.id, o.pose());
    observed[o.id] = &det;
    report.events.push_back("new object " + std::to_string(o.id) + " r=" + std::to_string(o.resolution()));
    ++next_object_id_;
  }

  for (const auto& [id, det] : assoc.matched) {
    auto it = objects_.find(id);
    if (it == objects_.end()) continue;
    const auto mask_cloud = mask_point_cloud(det.mask, depth, pose, camera_, config_.objects.erosion_radius);
    std::vector<Vec3> render_cloud;
    for (std::size_t i = 0; i < maps.index.size(); ++i)
      if (maps.index[i] == id && valid_point(maps.vertices[i])) render_cloud.push_back(maps.vertices[i]);
    const auto r = resize_object(it->second, mask_cloud, render_cloud, config_.objects);
    if (r.kind == ResizeKind::Unchanged) continue;
    if (r.kind == ResizeKind::Reinitialised) {
      // As though new: seed the empty volume from this frame.
      integrate_object(it->second, depth, pose, camera_, nullptr, config_.gate, exec());
      fuse_foreground(it->second, det.mask, depth, pose, camera_, exec());
    }
    graph_.recentre_object(id, r.new_from_old);
    graph_.set_state(object_key(id), it->second.pose());  // identical, not just equal to rounding
    snapshots_.recentre_object(id, r.new_from_old);
    report.events.push_back(std::string(r.kind == ResizeKind::Grown ? "grow" : "reinit") + " object " +
                            std::to_string(id) + " r=" + std::to_string(it->second.resolution()));
  }

  add_camera_node(ctx.frame, pose, ctx.icp_pose, ctx.systems);

  if (features_ && !observed.empty()) {
    FeatureFrame ff{ctx.frame, ctx.rgb ? &*ctx.rgb : nullptr, &depth, camera_};
    const auto kps = features_->detect(ff);
    for (const auto& [id, det] : observed) {
      std::vector<Keypoint> inside;
      for (const auto& kp : kps) {
        const int x = static_cast<int>(std::floor(kp.pixel.x() + 0.5));
        const int y = static_cast<int>(std::floor(kp.pixel.y() + 0.5));
        if (det->mask.in_bounds(x, y) && det->mask(x, y)) inside.push_back(kp);
      }
      const auto& o = objects_.at(id);
      if (!inside.empty() && snapshots_.maybe_add(id, o.pose(), pose, inside, o.class_distribution))
        report.events.push_back("snapshot object " + std::to_string(id));
    }
  }
}

FrameReport Pipeline::process(const FrameInput& frame) {
  if (status_ != RunStatus::Running) throw std::logic_error("pipeline is no longer running");
  if (!frame.depth) throw std::invalid_argument("frame without depth");
  const auto t_start = Clock::now();
  FrameReport report;
  report.index = frame.index;

  if (async_) {
    for (auto& res : async_->poll()) {
      auto it = pending_.find(res.frame);
      const auto t = Clock::now();
      handle_detections(*it->second, std::move(res.detections), report);
      report.timings.detection += ms_since(t);
      pending_.erase(it);
    }
  }

  auto t = Clock::now();
  const FramePyramid live = preprocess_frame(*frame.depth, camera_, config_.filter, config_.icp.levels, exec());
  report.timings.preprocess = ms_since(t);

  Pose icp_pose = pose_;
  std::map<int, TargetSystem> systems;
  TrackingQuality quality;
  std::map<int, int> visible;
  bool skip_objects = false;

  if (frames_ == 0) {
    pose_ = Pose::identity();
    icp_pose = pose_;
    background_ = init_background(pose_, config_.background);
    graph_.add_camera_node(frame.index, pose_);
  } else {
    t = Clock::now();
    const RenderedMaps maps = render(pose_);
    visible = maps.counts;
    report.timings.raycast = ms_since(t);

    t = Clock::now();
    const TrackingResult res = icp_track(maps, live, pose_, config_.icp, exec());
    report.timings.tracking = ms_since(t);
    report.icp_rmse = res.icp_rmse;
    report.valid_fraction = res.valid_fraction;
    report.lost = tracking_lost(res, config_.icp);

    if (!report.lost) {
      lost_streak_ = 0;
      icp_pose = res.pose;
      systems = res.systems;
      quality = tracking_quality(res);
      pose_ = icp_pose * se3_exp(frame.odometry_noise);
      if (!frame.odometry_noise.isZero()) transform_background(*background_, pose_ * icp_pose.inverse());
    } else {
      ++lost_streak_;
      skip_objects = true;
      t = Clock::now();
      if (features_ && snapshots_.size() > 0) {
        std::vector<std::vector<double>> classes;
        if (auto raw = fetch_detections(frame.index))
          for (const auto& d : filter_detections(std::move(*raw), config_.detection))
            classes.push_back(d.class_dist);
        std::map<int, RelocObject> objs;
        for (const auto& [id, o] : objects_) objs[id] = {o.pose(), o.class_distribution};
        const FeatureFrame ff{frame.index, frame.rgb, frame.depth, camera_};
        const auto r = relocalize(snapshots_, features_->detect(ff), objs, classes, *features_, config_.reloc);
        report.events.push_back("reloc: " + to_string(r.failure));
        if (r.success()) {
          report.relocalised = true;
          lost_streak_ = 0;
          pose_ = r.camera_pose;
          report.timings.reloc = ms_since(t);
          t = Clock::now();
          optimise(report);
          report.timings.graph = ms_since(t);
          reset_background(*background_, pose_, config_.background);
          report.background_reset = true;
        }
      }
      if (!report.relocalised) report.timings.reloc = ms_since(t);
      if (lost_streak_ >= config_.max_lost_frames) status_ = RunStatus::AbortedLost;
    }

    if (!report.lost && needs_reset(*background_, pose_, config_.background)) {
      t = Clock::now();
      reset_background(*background_, pose_, config_.background);
      add_camera_node(frame.index, pose_, icp_pose, systems);
      optimise(report);
      reset_background(*background_, pose_, config_.background);  // recentre on the optimised pose
      report.background_reset = true;
      report.events.emplace_back("background reset");
      report.timings.graph = ms_since(t);
    }
  }

  const bool tracked = !report.lost || report.relocalised;
  if (tracked) {
    t = Clock::now();
    integrate_background(*background_, *frame.depth, pose_, camera_, exec());
    report.timings.background = ms_since(t);
  }

  if (tracked && !skip_objects) {
    t = Clock::now();
    for (auto& [id, o] : objects_) {
      const auto v = visible.find(id);
      if (v == visible.end() || v->second == 0) continue;
      const auto q = quality.find(id);
      const TargetQuality none{};
      integrate_object(o, *frame.depth, pose_, camera_, q == quality.end() ? &none : &q->second,
                       config_.gate, exec());
    }
    report.timings.objects = ms_since(t);

    if (masks_ && masks_->is_detection_frame(frame.index)) {
      report.detection_frame = true;
      t = Clock::now();
      auto ctx = std::make_unique<DetectionContext>();
      ctx->frame = frame.index;
      ctx->pose = pose_;
      ctx->icp_pose = icp_pose;
      ctx->depth = *frame.depth;
      if (frame.rgb) ctx->rgb = *frame.rgb;
      ctx->systems = std::move(systems);
      if (async_) {
        async_->request(frame.index);
        pending_[frame.index] = std::move(ctx);
      } else if (auto raw = masks_->detections_for(frame.index)) {
        handle_detections(*ctx, std::move(*raw), report);
      }
      report.timings.detection += ms_since(t);
    }
  }

  trajectory_.poses.push_back({frame.timestamp, pose_});
  report.pose = pose_;
  ++frames_;
  report.timings.total = ms_since(t_start);
  write_stats(report);
  return report;
}

void Pipeline::finish() {
  if (!async_) return;
  FrameReport report;
  for (auto& res : async_->drain()) {
    auto it = pending_.find(res.frame);
    handle_detections(*it->second, std::move(res.detections), report);
    pending_.erase(it);
  }
}

void Pipeline::write_stats(const FrameReport& r) const {
  if (!stats_) return;
  nlohmann::json j;
  j["frame"] = r.index;
  j["lost"] = r.lost;
  j["relocalised"] = r.relocalised;
  j["background_reset"] = r.background_reset;
  j["detection_frame"] = r.detection_frame;
  j["icp_rmse"] = r.icp_rmse;
  j["valid_fraction"] = r.valid_fraction;
  j["objects"] = objects_.size();
  auto mem = nlohmann::json::array();
  std::size_t total = 0;
  for (const auto& [id, o] : objects_) {
    mem.push_back({{"id", id}, {"resolution", o.resolution()}, {"bytes", o.memory_bytes()}});
    total += o.memory_bytes();
  }
  j["object_memory"] = mem;
  j["object_bytes_total"] = total;
  j["background_bytes"] = background_ ? background_->volume.grid.bytes() : 0;
  j["graph"] = {{"nodes", graph_.nodes().size()}, {"edges", graph_.edges().size()}};
  const auto& tm = r.timings;
  j["timing_ms"] = {{"preprocess", tm.preprocess}, {"raycast", tm.raycast}, {"tracking", tm.tracking},
                    {"reloc", tm.reloc}, {"graph", tm.graph}, {"background", tm.background},
                    {"objects", tm.objects}, {"detection", tm.detection}, {"total", tm.total}};
  if (!r.events.empty()) j["events"] = r.events;
  *stats_ << j.dump() << '\n';
}

// --- Runners ------------------------------------------------------------------

RunResult run_synthetic(const SequenceSpec& sequence, const RunOptions& options,
                        const SyntheticRunOptions& synthetic) {
  const int n = options.max_frames < 0 ? sequence.trajectory.frame_count
                                       : std::min(options.max_frames, sequence.trajectory.frame_count);
  const auto twists = odometry_noise_twists(
      synthetic.odometry_noise.value_or(sequence.trajectory.odometry_noise), n);

  std::shared_ptr<const MaskSource> masks;
  if (options.use_masks)
    masks = std::make_shared<GroundTruthSource>(sequence, synthetic.corruption, options.config.seed,
                                                options.config.detection_cadence);
  std::shared_ptr<const FeatureInterface> features;
  if (options.use_features) features = std::make_shared<OracleFeatures>(sequence);

  Pipeline p(options.config, sequence.camera, masks, features, options.stats);
  RunResult out;
  out.groundtruth = TrajectoryRecord{};
  for (int f = 0; f < n; ++f) {
    const SynthFrame sf = render_sequence_frame(sequence, f);
    FrameInput in{f, sequence.trajectory.frame_time(f), &sf.depth, &sf.rgb,
                  f > 0 ? twists[static_cast<std::size_t>(f)] : Twist::Zero()};
    p.process(in);
    out.groundtruth->poses.push_back({in.timestamp, sequence.trajectory.frame_pose(f)});
    ++out.frames;
    if (p.status() != RunStatus::Running) break;
  }
  p.finish();
  out.status = p.status() == RunStatus::Running ? RunStatus::Completed : p.status();
  out.trajectory = p.trajectory();
  out.objects = p.objects();
  out.graph = p.graph();
  out.snapshots = p.snapshots();
  return out;
}

RunResult run_tum(const std::filesystem::path& dir, const Intrinsics& camera,
                  const RunOptions& options, const std::optional<std::filesystem::path>& mask_dir) {
  TumReader reader(dir);
  std::shared_ptr<const MaskSource> masks;
  if (options.use_masks && mask_dir)
    masks = std::make_shared<FileMaskSource>(*mask_dir, camera.width, camera.height,
                                             options.config.detection_cadence);
  std::shared_ptr<const FeatureInterface> features;
  if (options.use_features) features = std::make_shared<HarrisBrief>();

  Pipeline p(options.config, camera, masks, features, options.stats);
  RunResult out;
  out.groundtruth = reader.groundtruth();
  while (auto f = reader.next()) {
    if (options.max_frames >= 0 && out.frames >= options.max_frames) break;
    FrameInput in{f->index, f->timestamp, &f->depth, &f->rgb, Twist::Zero()};
    p.process(in);
    ++out.frames;
    if (p.status() != RunStatus::Running) break;
  }
  p.finish();
  out.status = p.status() == RunStatus::Running ? RunStatus::Completed : p.status();
  out.trajectory = p.trajectory();
  out.objects = p.objects();
  out.graph = p.graph();
  out.snapshots = p.snapshots();
  return out;
}

void write_run_outputs(const std::filesystem::path& dir, const RunResult& result) {
  std::filesystem::create_directories(dir / "meshes");
  std::filesystem::create_directories(dir / "volumes");
  write_trajectory(dir / "trajectory.txt", result.trajectory);
  if (result.groundtruth) write_trajectory(dir / "groundtruth.txt", *result.groundtruth);
  {
    std::ofstream g(dir / "graph.txt");
    result.graph.write(g);
    if (!g) throw std::runtime_error("cannot write " + (dir / "graph.txt").string());
  }
  result.snapshots.save(dir / "snapshots.bin");

  nlohmann::json objs = nlohmann::json::array();
  for (const auto& [id, o] : result.objects) {
    const auto stem = "object_" + std::to_string(id);
    write_ply(dir / "meshes" / (stem + ".ply"), extract_mesh(o));
    write_volume_dump(dir / "volumes" / stem, o);
    objs.push_back({{"id", id},
                    {"resolution", o.resolution()},
                    {"size", o.size()},
                    {"bytes", o.memory_bytes()},
                    {"existence", o.existence.expectation()},
                    {"class_distribution", o.class_distribution}});
  }
  nlohmann::json s;
  s["status"] = to_string(result.status);
  s["frames"] = result.frames;
  s["objects"] = objs;
  s["graph"] = {{"nodes", result.graph.nodes().size()}, {"edges", result.graph.edges().size()}};
  std::ofstream so(dir / "summary.json");
  so << s.dump(2) << '\n';
}

}  // namespace objslam
