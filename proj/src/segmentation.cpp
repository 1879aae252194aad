#include "objslam/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>

namespace objslam {

MaskSource::MaskSource(int cadence) : cadence_(cadence) {
  if (cadence < 1) throw std::invalid_argument("detection cadence must be >= 1");
}

std::optional<std::vector<Detection>> MaskSource::detections_for(int frame) const {
  if (!is_detection_frame(frame)) return std::nullopt;
  auto dets = produce(frame);
  for (const auto& d : dets) d.validate();
  return dets;
}

// ---------------------------------------------------------------------------

GroundTruthSource::GroundTruthSource(SequenceSpec sequence, MaskCorruption corruption,
                                     std::uint64_t seed, int cadence)
    : MaskSource(cadence), sequence_(std::move(sequence)), corruption_(corruption), seed_(seed) {
  if (corruption_.dropout < 0.0 || corruption_.dropout > 1.0)
    throw std::invalid_argument("dropout must lie in [0, 1]");
  if (corruption_.softening < 0.0 || corruption_.softening > 1.0)
    throw std::invalid_argument("softening must lie in [0, 1]");
  if (corruption_.jitter < 0 || corruption_.false_positives < 0.0)
    throw std::invalid_argument("negative corruption parameter");
  if (sequence_.scene.label_set.empty()) throw std::invalid_argument("scene has no label set");
}

std::vector<Detection> GroundTruthSource::produce(int frame) const {
  return from_index(render_sequence_frame(sequence_, frame).index, frame);
}

namespace {

std::vector<double> softened(std::size_t classes, int true_class, double softening) {
  std::vector<double> p(classes, softening / static_cast<double>(classes));
  p[static_cast<std::size_t>(true_class)] += 1.0 - softening;
  return p;
}

Mask jittered(const Mask& m, int radius) {
  if (radius > 0) return dilate(m, radius);
  if (radius < 0) return erode(m, -radius);
  return m;
}

}  // namespace

std::vector<Detection> GroundTruthSource::from_index(const InstanceImage& index, int frame) const {
  std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                    static_cast<std::uint32_t>(frame), 0x6d61736bu};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> jitter(-corruption_.jitter, corruption_.jitter);

  const auto& scene = sequence_.scene;
  const std::size_t classes = scene.label_set.size();

  std::map<int, Mask> masks;
  for (std::size_t i = 0; i < index.size(); ++i) {
    const int id = index[i];
    if (id == 0) continue;
    const Primitive* p = scene.find(id);
    if (!p || !p->is_object) continue;
    auto [it, inserted] = masks.try_emplace(id, index.width(), index.height());
    it->second[i] = 1;
  }

  std::vector<Detection> out;
  // Draws happen for every instance in id order whatever the outcome, so one
  // instance's corruption never shifts another's random stream.
  for (const auto& [id, mask] : masks) {
    const bool dropped = unit(rng) < corruption_.dropout;
    const int radius = jitter(rng);
    if (dropped) continue;
    Detection d;
    d.mask = jittered(mask, radius);
    d.class_dist = softened(classes, scene.label_index(scene.find(id)->label), corruption_.softening);
    d.score = corruption_.score;
    out.push_back(std::move(d));
  }

  if (corruption_.false_positives > 0.0) {
    std::poisson_distribution<int> count(corruption_.false_positives);
    const int n = count(rng);
    std::uniform_int_distribution<int> cls(0, static_cast<int>(classes) - 1);
    for (int k = 0; k < n; ++k) {
      const double r = 30.0 + 20.0 * unit(rng);
      const double cx = unit(rng) * index.width();
      const double cy = unit(rng) * index.height();
      Detection d;
      d.mask = Mask(index.width(), index.height());
      for (int y = 0; y < index.height(); ++y)
        for (int x = 0; x < index.width(); ++x)
          if (std::hypot(x - cx, y - cy) <= r) d.mask(x, y) = 1;
      d.class_dist = softened(classes, cls(rng), corruption_.softening);
      d.score = corruption_.score * unit(rng);
      out.push_back(std::move(d));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::filesystem::path mask_raster_path(const std::filesystem::path& dir, int frame) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.idx", frame);
  return dir / name;
}

std::filesystem::path mask_sidecar_path(const std::filesystem::path& dir, int frame) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.txt", frame);
  return dir / name;
}

FileMaskSource::FileMaskSource(std::filesystem::path dir, int width, int height, int cadence)
    : MaskSource(cadence), dir_(std::move(dir)), width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("mask raster size must be positive");
}

namespace {

[[noreturn]] void load_error(const std::filesystem::path& path, const std::string& what) {
  throw std::runtime_error("mask file " + path.string() + ": " + what);
}

}  // namespace

std::vector<Detection> FileMaskSource::produce(int frame) const {
  const auto raster = mask_raster_path(dir_, frame);
  const auto sidecar = mask_sidecar_path(dir_, frame);
  const bool have_raster = std::filesystem::exists(raster);
  const bool have_sidecar = std::filesystem::exists(sidecar);
  if (!have_raster && !have_sidecar) return {};
  if (!have_raster) load_error(raster, "missing (sidecar present)");
  if (!have_sidecar) load_error(sidecar, "missing (raster present)");

  const auto expected = static_cast<std::uintmax_t>(width_) * height_ * 2;
  if (std::filesystem::file_size(raster) != expected)
    load_error(raster, "size " + std::to_string(std::filesystem::file_size(raster)) +
                           " bytes, expected " + std::to_string(expected) + " for " +
                           std::to_string(width_) + "x" + std::to_string(height_));
  std::ifstream rin(raster, std::ios::binary);
  std::vector<unsigned char> bytes(expected);
  if (!rin.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(expected)))
    load_error(raster, "read failed");

  std::ifstream sin(sidecar);
  if (!sin) load_error(sidecar, "cannot open");
  std::map<int, Detection> by_id;
  std::string line;
  int line_no = 0;
  while (std::getline(sin, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    int id = 0;
    Detection d;
    if (!(ls >> id >> d.score)) load_error(sidecar, "line " + std::to_string(line_no) + ": expected 'id score p...'");
    for (double p; ls >> p;) d.class_dist.push_back(p);
    if (!ls.eof()) load_error(sidecar, "line " + std::to_string(line_no) + ": non-numeric value");
    if (id <= 0 || id > 65535) load_error(sidecar, "line " + std::to_string(line_no) + ": id out of range");
    try {
      d.validate();
    } catch (const std::invalid_argument& e) {
      load_error(sidecar, "line " + std::to_string(line_no) + ": " + e.what());
    }
    if (by_id.count(id)) load_error(sidecar, "line " + std::to_string(line_no) + ": duplicate id");
    d.mask = Mask(width_, height_);
    by_id.emplace(id, std::move(d));
  }

  for (std::size_t i = 0; i < static_cast<std::size_t>(width_) * height_; ++i) {
    const int id = bytes[2 * i] | (bytes[2 * i + 1] << 8);
    if (id == 0) continue;
    auto it = by_id.find(id);
    if (it == by_id.end()) load_error(raster, "instance id " + std::to_string(id) + " not in sidecar");
    it->second.mask[i] = 1;
  }

  std::vector<Detection> out;
  for (auto& [id, d] : by_id) out.push_back(std::move(d));
  return out;
}

void write_mask_files(const std::filesystem::path& dir, int frame, const InstanceImage& index,
                      const std::vector<MaskFileEntry>& entries) {
  std::filesystem::create_directories(dir);
  const auto raster = mask_raster_path(dir, frame);
  std::ofstream rout(raster, std::ios::binary);
  std::vector<unsigned char> bytes(index.size() * 2);
  for (std::size_t i = 0; i < index.size(); ++i) {
    bytes[2 * i] = static_cast<unsigned char>(index[i] & 0xff);
    bytes[2 * i + 1] = static_cast<unsigned char>(index[i] >> 8);
  }
  rout.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!rout) throw std::runtime_error("cannot write " + raster.string());

  const auto sidecar = mask_sidecar_path(dir, frame);
  std::ofstream sout(sidecar);
  for (const auto& e : entries) {
    sout << e.id;
    char buf[40];
    std::snprintf(buf, sizeof buf, " %.17g", e.score);
    sout << buf;
    for (double p : e.class_dist) {
      std::snprintf(buf, sizeof buf, " %.17g", p);
      sout << buf;
    }
    sout << '\n';
  }
  if (!sout) throw std::runtime_error("cannot write " + sidecar.string());
}

// ---------------------------------------------------------------------------

AsyncMaskSource::AsyncMaskSource(std::shared_ptr<const MaskSource> source)
    : source_(std::move(source)) {
  if (!source_) throw std::invalid_argument("null mask source");
}

AsyncMaskSource::~AsyncMaskSource() {
  for (auto& [frame, fut] : queue_)
    if (fut.valid()) fut.wait();
}

void AsyncMaskSource::request(int frame) {
  if (!source_->is_detection_frame(frame)) return;
  auto src = source_;
  queue_.emplace_back(frame, std::async(std::launch::async, [src, frame] {
                        return *src->detections_for(frame);
                      }));
}

std::vector<AsyncMaskSource::Result> AsyncMaskSource::poll() {
  std::vector<Result> out;
  while (!queue_.empty() &&
         queue_.front().second.wait_for(std::chrono::seconds(0)) == std::future_status::ready) {
    out.push_back({queue_.front().first, queue_.front().second.get()});
    queue_.pop_front();
  }
  return out;
}

std::vector<AsyncMaskSource::Result> AsyncMaskSource::drain() {
  std::vector<Result> out;
  while (!queue_.empty()) {
    out.push_back({queue_.front().first, queue_.front().second.get()});
    queue_.pop_front();
  }
  return out;
}

}  // namespace objslam
