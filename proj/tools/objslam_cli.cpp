// Command-line front end: run, eval-ate, export-meshes, synth-generate,
// dump-graph, print-config.
#include "objslam/io.hpp"
#include "objslam/mesh.hpp"
#include "objslam/pipeline.hpp"
#include "objslam/segmentation.hpp"
#include "objslam/synthworld.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace objslam;

namespace {

constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

// Failure with a message for the machine-readable error line.
struct CommandError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void print_error(const std::string& command, const std::string& message) {
  std::cerr << "error: " << nlohmann::json{{"command", command}, {"message", message}}.dump() << '\n';
}

void require_exists(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw CommandError(what + " not found: " + p.string());
}

// "fx fy cx cy width height" on one line; '#' comments allowed.
Intrinsics read_camera_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CommandError("cannot open camera file " + path.string());
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    Intrinsics k;
    if (!(ls >> k.fx >> k.fy >> k.cx >> k.cy >> k.width >> k.height))
      throw CommandError("camera file " + path.string() + ": expected fx fy cx cy width height");
    k.validate();
    return k;
  }
  throw CommandError("camera file " + path.string() + " is empty");
}

void write_camera_file(const fs::path& path, const Intrinsics& k) {
  std::ofstream out(path);
  out << "# fx fy cx cy width height\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %d %d\n", k.fx, k.fy, k.cx, k.cy,
                k.width, k.height);
  out << buf;
}

// Default TUM RGB-D intrinsics (ROS default calibration), used when the
// dataset has no camera.txt and none is given.
Intrinsics tum_default_camera() { return {525.0, 525.0, 319.5, 239.5, 640, 480}; }

// --- run ----------------------------------------------------------------------

struct RunArgs {
  std::string synth;
  std::string dataset;
  std::string masks;
  std::string camera;
  std::string config;
  std::vector<std::string> overrides;
  std::string out = "run_out";
  int frames = -1;
  bool no_masks = false;
  bool no_features = false;
  std::optional<std::uint64_t> seed;
  std::optional<double> noise_t;    // metres / frame
  std::optional<double> noise_r;    // degrees / frame
  double dropout = 0.0;
  std::uint64_t scene_seed = 7;
};

int cmd_run(const RunArgs& a) {
  if (a.synth.empty() == a.dataset.empty()) throw CommandError("give exactly one of --synth or --dataset");
  PipelineConfig config;
  if (!a.config.empty()) {
    require_exists(a.config, "config");
    config = PipelineConfig::load(a.config);
  }
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CommandError("--set expects key=value, got '" + kv + "'");
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (a.seed) config.seed = *a.seed;
  config.validate();

  fs::create_directories(a.out);
  std::ofstream stats(fs::path(a.out) / "stats.jsonl");
  config.save(fs::path(a.out) / "config.txt");

  RunOptions opt;
  opt.config = config;
  opt.stats = &stats;
  opt.max_frames = a.frames;
  opt.use_masks = !a.no_masks;
  opt.use_features = !a.no_features;

  RunResult result;
  if (!a.synth.empty()) {
    const SequenceSpec seq = loop_sequence(a.synth, a.scene_seed);
    SyntheticRunOptions s;
    s.corruption.dropout = a.dropout;
    if (a.noise_t || a.noise_r) {
      OdometryNoise n = seq.trajectory.odometry_noise;
      n.sigma_t = a.noise_t.value_or(0.0);
      n.sigma_r = a.noise_r.value_or(0.0) * std::numbers::pi / 180.0;
      s.odometry_noise = n;
    }
    result = run_synthetic(seq, opt, s);
  } else {
    require_exists(a.dataset, "dataset");
    Intrinsics k = tum_default_camera();
    if (!a.camera.empty()) k = read_camera_file(a.camera);
    else if (fs::exists(fs::path(a.dataset) / "camera.txt")) k = read_camera_file(fs::path(a.dataset) / "camera.txt");
    std::optional<fs::path> mask_dir;
    if (!a.masks.empty()) {
      require_exists(a.masks, "mask directory");
      mask_dir = a.masks;
    } else if (fs::exists(fs::path(a.dataset) / "masks")) {
      mask_dir = fs::path(a.dataset) / "masks";
    }
    result = run_tum(a.dataset, k, opt, mask_dir);
  }
  write_run_outputs(a.out, result);

  nlohmann::json summary{{"status", to_string(result.status)},
                         {"frames", result.frames},
                         {"objects", result.objects.size()},
                         {"out", a.out}};
  if (result.groundtruth && result.groundtruth->poses.size() >= 3) {
    try {
      summary["ate_rmse"] = evaluate_ate(result.trajectory, *result.groundtruth).rmse;
    } catch (const std::invalid_argument&) {
      // Too few timestamp matches; ATE is simply not reported.
    }
  }
  std::cout << summary.dump() << '\n';
  return result.status == RunStatus::Completed ? 0 : kExitPartial;
}

// --- eval-ate -----------------------------------------------------------------

int cmd_eval_ate(const std::string& est, const std::string& gt, double max_dt, bool verbose) {
  require_exists(est, "estimate");
  require_exists(gt, "ground truth");
  const AteResult r = evaluate_ate(read_trajectory(fs::path(est)), read_trajectory(fs::path(gt)), max_dt);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", r.rmse);
  std::cout << buf << '\n';
  if (verbose) std::cerr << "matches " << r.matches << '\n';
  return 0;
}

// --- export-meshes ------------------------------------------------------------

int cmd_export_meshes(const std::string& volumes, const std::string& out, double threshold) {
  require_exists(volumes, "volume directory");
  fs::create_directories(out);
  int n = 0;
  std::vector<fs::path> stems;
  for (const auto& e : fs::directory_iterator(volumes))
    if (e.path().extension() == ".json") stems.push_back(e.path().parent_path() / e.path().stem());
  std::sort(stems.begin(), stems.end());
  for (const auto& stem : stems) {
    const ObjectVolume o = read_volume_dump(stem);
    const TriangleMesh mesh = extract_mesh(o, threshold);
    write_ply(fs::path(out) / (stem.filename().string() + ".ply"), mesh);
    std::cout << stem.filename().string() << ' ' << mesh.triangles.size() << " triangles\n";
    ++n;
  }
  if (n == 0) throw CommandError("no volume dumps (*.json + *.vox) in " + volumes);
  return 0;
}

// --- synth-generate -------------------------------------------------------------

int cmd_synth_generate(const std::string& preset, const std::string& out, int frames,
                       std::uint64_t scene_seed, std::uint64_t mask_seed, int cadence,
                       double dropout) {
  const SequenceSpec seq = loop_sequence(preset, scene_seed);
  const int n = frames < 0 ? seq.trajectory.frame_count : std::min(frames, seq.trajectory.frame_count);
  const fs::path dir(out);
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  fs::create_directories(dir / "masks");
  std::ofstream rgb_list(dir / "rgb.txt"), depth_list(dir / "depth.txt");
  rgb_list << "# timestamp filename\n";
  depth_list << "# timestamp filename\n";
  TrajectoryRecord gt;
  MaskCorruption corruption;
  corruption.dropout = dropout;
  const GroundTruthSource masks(seq, corruption, mask_seed, cadence);
  for (int f = 0; f < n; ++f) {
    const SynthFrame sf = render_sequence_frame(seq, f);
    const double t = seq.trajectory.frame_time(f);
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "%.6f", t);
    const std::string name = std::string(stamp) + ".png";
    write_png_rgb(dir / "rgb" / name, sf.rgb);
    write_png_u16(dir / "depth" / name, encode_depth(sf.depth));
    rgb_list << stamp << " rgb/" << name << '\n';
    depth_list << stamp << " depth/" << name << '\n';
    gt.poses.push_back({t, seq.trajectory.frame_pose(f)});
    if (masks.is_detection_frame(f)) {
      std::vector<MaskFileEntry> entries;
      InstanceImage index(seq.camera.width, seq.camera.height, 0);
      std::uint16_t next = 1;
      for (const auto& d : masks.from_index(sf.index, f)) {
        for (std::size_t i = 0; i < d.mask.size(); ++i)
          if (d.mask[i]) index[i] = next;
        entries.push_back({next, d.score, d.class_dist});
        ++next;
      }
      write_mask_files(dir / "masks", f, index, entries);
    }
  }
  write_trajectory(dir / "groundtruth.txt", gt);
  write_camera_file(dir / "camera.txt", seq.camera);
  save_scene(seq.scene, dir / "scene.json");
  save_trajectory(seq.trajectory, dir / "trajectory.json");
  std::cout << nlohmann::json{{"frames", n}, {"out", out}}.dump() << '\n';
  return 0;
}

// --- dump-graph -----------------------------------------------------------------

int cmd_dump_graph(const std::string& path, bool json) {
  require_exists(path, "graph file");
  std::ifstream in(path);
  const PoseGraph g = PoseGraph::read(in);
  if (json) {
    nlohmann::json j;
    j["nodes"] = nlohmann::json::array();
    for (const auto& n : g.nodes()) {
      const Vec3 t = n.state.translation();
      const Eigen::Quaterniond q(n.state.rotation());
      j["nodes"].push_back({{"kind", to_string(n.key.kind)}, {"id", n.key.id}, {"fixed", n.fixed},
                            {"t", {t.x(), t.y(), t.z()}}, {"q", {q.x(), q.y(), q.z(), q.w()}}});
    }
    j["edges"] = nlohmann::json::array();
    for (const auto& e : g.edges())
      j["edges"].push_back({{"from", {to_string(e.from.kind), e.from.id}},
                            {"to", {to_string(e.to.kind), e.to.id}},
                            {"error", g.edge_error(e).norm()}});
    j["total_error"] = g.total_error();
    std::cout << j.dump(2) << '\n';
  } else {
    g.write(std::cout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Object-level volumetric RGB-D SLAM"};
  app.require_subcommand(1);

  RunArgs run;
  auto* c_run = app.add_subcommand("run", "Run the pipeline on a synthetic preset or a TUM-layout dataset");
  c_run->add_option("--synth", run.synth, "Synthetic preset (loop-small, loop-tiny)");
  c_run->add_option("--dataset", run.dataset, "TUM RGB-D layout directory (rgb.txt, depth.txt)");
  c_run->add_option("--masks", run.masks, "Mask directory (default: <dataset>/masks when present)");
  c_run->add_option("--camera", run.camera, "Camera file: fx fy cx cy width height");
  c_run->add_option("--config", run.config, "Config file (key = value)");
  c_run->add_option("--set", run.overrides, "Override a config key: key=value (repeatable)");
  c_run->add_option("--out", run.out, "Output directory")->capture_default_str();
  c_run->add_option("--frames", run.frames, "Stop after this many frames");
  c_run->add_flag("--no-masks", run.no_masks, "Disable detections (coarse-volume odometry baseline)");
  c_run->add_flag("--no-features", run.no_features, "Disable relocalisation features");
  c_run->add_option("--seed", run.seed, "Pipeline seed (overrides the config)");
  c_run->add_option("--noise-t", run.noise_t, "Synthetic odometry noise, metres per frame");
  c_run->add_option("--noise-r", run.noise_r, "Synthetic odometry noise, degrees per frame");
  c_run->add_option("--dropout", run.dropout, "Synthetic mask dropout probability")->check(CLI::Range(0.0, 1.0));
  c_run->add_option("--scene-seed", run.scene_seed, "Synthetic scene seed")->capture_default_str();

  std::string est, gt;
  double max_dt = 0.02;
  bool verbose = false;
  auto* c_ate = app.add_subcommand("eval-ate", "Print the ATE RMSE (metres) of an estimate against ground truth");
  c_ate->add_option("estimate", est, "Estimated trajectory")->required();
  c_ate->add_option("groundtruth", gt, "Ground-truth trajectory")->required();
  c_ate->add_option("--max-dt", max_dt, "Timestamp association tolerance, seconds")->capture_default_str();
  c_ate->add_flag("-v,--verbose", verbose, "Report the number of matches on stderr");

  std::string volumes, mesh_out = "meshes";
  double fg_threshold = 0.5;
  auto* c_mesh = app.add_subcommand("export-meshes", "Extract PLY meshes from volume dumps");
  c_mesh->add_option("volumes", volumes, "Directory of <stem>.json/<stem>.vox dumps")->required();
  c_mesh->add_option("--out", mesh_out, "Output directory")->capture_default_str();
  c_mesh->add_option("--foreground", fg_threshold, "Foreground probability threshold")->capture_default_str();

  std::string preset = "loop-small", synth_out;
  int synth_frames = -1, cadence = 30;
  std::uint64_t scene_seed = 7, mask_seed = 0;
  double dropout = 0.0;
  auto* c_synth = app.add_subcommand("synth-generate", "Write a synthetic sequence in TUM layout with mask files");
  c_synth->add_option("preset", preset, "Preset name")->required();
  c_synth->add_option("--out", synth_out, "Output directory")->required();
  c_synth->add_option("--frames", synth_frames, "Number of frames (default: all)");
  c_synth->add_option("--scene-seed", scene_seed, "Scene seed")->capture_default_str();
  c_synth->add_option("--mask-seed", mask_seed, "Mask corruption seed")->capture_default_str();
  c_synth->add_option("--cadence", cadence, "Frames between mask files")->capture_default_str();
  c_synth->add_option("--dropout", dropout, "Mask dropout probability")->check(CLI::Range(0.0, 1.0));

  std::string graph_path;
  bool graph_json = false;
  auto* c_graph = app.add_subcommand("dump-graph", "Print a pose-graph file");
  c_graph->add_option("graph", graph_path, "graph.txt from a run")->required();
  c_graph->add_flag("--json", graph_json, "Print nodes, edges and errors as JSON");

  auto* c_cfg = app.add_subcommand("print-config", "Print the default configuration file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error(app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name(), e.what());
    return kExitError;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    if (*c_run) return cmd_run(run);
    if (*c_ate) return cmd_eval_ate(est, gt, max_dt, verbose);
    if (*c_mesh) return cmd_export_meshes(volumes, mesh_out, fg_threshold);
    if (*c_synth) return cmd_synth_generate(preset, synth_out, synth_frames, scene_seed, mask_seed, cadence, dropout);
    if (*c_graph) return cmd_dump_graph(graph_path, graph_json);
    if (*c_cfg) {
      PipelineConfig{}.write(std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    print_error(name, e.what());
    return kExitError;
  }
  return kExitError;
}
