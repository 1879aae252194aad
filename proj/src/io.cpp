#include "objslam/io.hpp"

#include "json.hpp"

#include <png.h>

#include <Eigen/Geometry>

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace objslam {

// --- PNG ------------------------------------------------------------------

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

void png_error_fn(png_structp png, png_const_charp) { longjmp(png_jmpbuf(png), 1); }
void png_warning_fn(png_structp, png_const_charp) {}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 0;
  int bit_depth = 0;
  std::vector<unsigned char> rows;  // packed, native byte order for 16-bit
};

// Decodes to grey (1 channel) or RGB (3 channels), 8 or 16 bits; palettes are
// expanded and alpha is dropped.
DecodedPng decode_png(const std::filesystem::path& path, bool want_rgb, bool want16) {
  auto file = open_file(path, "rb");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8))
    throw std::runtime_error("not a PNG file: " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  DecodedPng out;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error("cannot decode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int colour = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (colour == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (colour == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (colour & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  const bool grey_in = (colour & PNG_COLOR_MASK_COLOR) == 0;
  if (want_rgb && grey_in) png_set_gray_to_rgb(png);
  if (!want_rgb && !grey_in) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  if (want16 && depth < 16) png_set_expand_16(png);
  if (!want16 && depth == 16) png_set_strip_16(png);
  if (depth == 16 && want16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_read_update_info(png, info);

  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  out.rows.resize(stride * out.height);
  row_ptrs.resize(out.height);
  for (int y = 0; y < out.height; ++y) row_ptrs[y] = out.rows.data() + y * stride;
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

void encode_png(const std::filesystem::path& path, int width, int height, int colour,
                int bit_depth, const std::vector<png_bytep>& rows) {
  auto file = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_fn, png_warning_fn);
  if (!png) throw std::runtime_error("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("cannot encode PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               bit_depth, colour, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16 && std::endian::native == std::endian::little) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows.data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

Image<std::uint16_t> read_png_u16(const std::filesystem::path& path) {
  const auto d = decode_png(path, false, true);
  Image<std::uint16_t> img(d.width, d.height);
  std::memcpy(img.data(), d.rows.data(), img.size() * sizeof(std::uint16_t));
  return img;
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  const auto d = decode_png(path, true, false);
  RgbImage img(d.width, d.height);
  std::memcpy(img.data(), d.rows.data(), img.size() * 3);
  return img;
}

void write_png_u16(const std::filesystem::path& path, const Image<std::uint16_t>& image) {
  std::vector<png_bytep> rows(image.height());
  auto* base = reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(image.data()));
  for (int y = 0; y < image.height(); ++y) rows[y] = base + static_cast<std::size_t>(y) * image.width() * 2;
  encode_png(path, image.width(), image.height(), PNG_COLOR_TYPE_GRAY, 16, rows);
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& image) {
  std::vector<png_bytep> rows(image.height());
  auto* base = reinterpret_cast<png_bytep>(const_cast<Rgb*>(image.data()));
  for (int y = 0; y < image.height(); ++y) rows[y] = base + static_cast<std::size_t>(y) * image.width() * 3;
  encode_png(path, image.width(), image.height(), PNG_COLOR_TYPE_RGB, 8, rows);
}

Image<std::uint16_t> encode_depth(const DepthImage& depth, double units_per_metre) {
  Image<std::uint16_t> raw(depth.width(), depth.height(), 0);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    if (!valid_depth(depth[i])) continue;
    const double u = std::round(depth[i] * units_per_metre);
    raw[i] = static_cast<std::uint16_t>(std::clamp(u, 0.0, 65535.0));
  }
  return raw;
}

DepthImage decode_depth(const Image<std::uint16_t>& raw, double units_per_metre) {
  DepthImage depth(raw.width(), raw.height(), 0.0f);
  for (std::size_t i = 0; i < raw.size(); ++i)
    depth[i] = static_cast<float>(raw[i] / units_per_metre);
  return depth;
}

// --- Trajectories -----------------------------------------------------------

void TrajectoryRecord::validate() const {
  for (std::size_t i = 1; i < poses.size(); ++i)
    if (poses[i].timestamp < poses[i - 1].timestamp)
      throw std::invalid_argument("trajectory timestamps must be non-decreasing");
}

namespace {

// Fixed 6-decimal formatting without a "-0.000000".
std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  if (std::string_view(buf) == "-0.000000") return "0.000000";
  return buf;
}

}  // namespace

void write_trajectory(std::ostream& os, const TrajectoryRecord& record) {
  record.validate();
  for (const auto& tp : record.poses) {
    const Eigen::Quaterniond q = tp.pose.quaternion();
    const Vec3& t = tp.pose.translation();
    os << fixed6(tp.timestamp) << ' ' << fixed6(t.x()) << ' ' << fixed6(t.y()) << ' '
       << fixed6(t.z()) << ' ' << fixed6(q.x()) << ' ' << fixed6(q.y()) << ' ' << fixed6(q.z())
       << ' ' << fixed6(q.w()) << '\n';
  }
}

void write_trajectory(const std::filesystem::path& path, const TrajectoryRecord& record) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  write_trajectory(os, record);
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

TrajectoryRecord read_trajectory(std::istream& is, const std::string& name) {
  TrajectoryRecord rec;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double v[8];
    for (double& x : v)
      if (!(ls >> x))
        throw std::runtime_error(name + ": line " + std::to_string(line_no) + ": expected 8 numbers");
    Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-5)
      throw std::runtime_error(name + ": line " + std::to_string(line_no) + ": quaternion not unit");
    rec.poses.push_back({v[0], Pose::from_quaternion(q, Vec3(v[1], v[2], v[3]))});
  }
  try {
    rec.validate();
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(name + ": " + e.what());
  }
  return rec;
}

TrajectoryRecord read_trajectory(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return read_trajectory(is, path.string());
}

std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(
    const std::vector<double>& a, const std::vector<double>& b, double max_dt) {
  struct Candidate {
    double dt;
    std::size_t i, j;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < a.size(); ++i) {
    // Only b within the window can pair; b is usually sorted, but do not rely on it.
    for (std::size_t j = 0; j < b.size(); ++j) {
      const double dt = std::abs(a[i] - b[j]);
      if (dt <= max_dt) cands.push_back({dt, i, j});
    }
  }
  std::stable_sort(cands.begin(), cands.end(), [](const Candidate& x, const Candidate& y) {
    if (x.dt != y.dt) return x.dt < y.dt;
    return x.i != y.i ? x.i < y.i : x.j < y.j;
  });
  std::vector<char> used_a(a.size(), 0), used_b(b.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : cands) {
    if (used_a[c.i] || used_b[c.j]) continue;
    used_a[c.i] = used_b[c.j] = 1;
    out.emplace_back(c.i, c.j);
  }
  std::sort(out.begin(), out.end(), [&](const auto& x, const auto& y) {
    return a[x.first] != a[y.first] ? a[x.first] < a[y.first] : x.first < y.first;
  });
  return out;
}

AteResult evaluate_ate(const TrajectoryRecord& estimate, const TrajectoryRecord& truth,
                       double max_dt) {
  std::vector<double> te, tt;
  for (const auto& p : estimate.poses) te.push_back(p.timestamp);
  for (const auto& p : truth.poses) tt.push_back(p.timestamp);
  const auto pairs = associate_timestamps(te, tt, max_dt);
  if (pairs.size() < 3)
    throw std::invalid_argument("too few matches for ATE: " + std::to_string(pairs.size()));

  const auto n = static_cast<Eigen::Index>(pairs.size());
  Eigen::Matrix3Xd src(3, n), dst(3, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    src.col(k) = estimate.poses[pairs[k].first].pose.translation();
    dst.col(k) = truth.poses[pairs[k].second].pose.translation();
  }
  AteResult r;
  r.matches = pairs.size();
  r.alignment = Pose::from_matrix(Eigen::umeyama(src, dst, false));
  double sq = 0.0, rot = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    sq += (r.alignment * Vec3(src.col(k)) - dst.col(k)).squaredNorm();
    const Pose aligned = r.alignment * estimate.poses[pairs[k].first].pose;
    const Mat3 d = aligned.rotation().transpose() * truth.poses[pairs[k].second].pose.rotation();
    rot += Eigen::AngleAxisd(d).angle();
  }
  r.rmse = std::sqrt(sq / static_cast<double>(n));
  r.mean_rotation_deg = rot / static_cast<double>(n) * 180.0 / std::numbers::pi;
  return r;
}

// --- TUM RGB-D ----------------------------------------------------------------

namespace {

std::vector<std::pair<double, std::string>> read_list(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("missing list " + path.string());
  std::vector<std::pair<double, std::string>> out;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double t;
    std::string file;
    if (!(ls >> t >> file))
      throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                               ": expected 'timestamp filename'");
    out.emplace_back(t, file);
  }
  return out;
}

}  // namespace

TumReader::TumReader(const std::filesystem::path& dir, double max_dt, double depth_units_per_metre)
    : dir_(dir), depth_scale_(depth_units_per_metre) {
  const auto rgb = read_list(dir / "rgb.txt");
  const auto depth = read_list(dir / "depth.txt");
  std::vector<double> tr, td;
  for (const auto& e : rgb) tr.push_back(e.first);
  for (const auto& e : depth) td.push_back(e.first);
  for (const auto& [i, j] : associate_timestamps(tr, td, max_dt))
    entries_.push_back({rgb[i].first, depth[j].first, dir / rgb[i].second, dir / depth[j].second});
  skipped_ = rgb.size() - entries_.size();
  if (std::filesystem::exists(dir / "groundtruth.txt"))
    groundtruth_ = read_trajectory(dir / "groundtruth.txt");
}

TumFrame TumReader::load(std::size_t i) const {
  const auto& e = entries_.at(i);
  TumFrame f;
  f.index = static_cast<int>(i);
  f.timestamp = e.rgb_time;
  f.rgb = read_png_rgb(e.rgb);
  f.depth = decode_depth(read_png_u16(e.depth), depth_scale_);
  if (!f.rgb.same_shape(f.depth))
    throw std::runtime_error("rgb/depth size mismatch: " + e.rgb.string() + " vs " + e.depth.string());
  return f;
}

std::optional<TumFrame> TumReader::next() {
  if (cursor_ >= entries_.size()) return std::nullopt;
  return load(cursor_++);
}

// --- Volume dumps -------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::vector<unsigned char>& out, T v) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<unsigned char>(u >> (8 * b)));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint16_t>;
  U u = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b) u |= static_cast<U>(static_cast<U>(p[b]) << (8 * b));
  return std::bit_cast<T>(u);
}

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  return std::filesystem::path(stem.string() + ext);
}

}  // namespace

void write_volume_dump(const std::filesystem::path& stem, const ObjectVolume& object) {
  const auto& voxels = object.volume.grid.voxels();
  std::vector<unsigned char> bytes;
  bytes.reserve(voxels.size() * 10);
  for (const auto& v : voxels) {
    put_le(bytes, v.sdf);
    put_le(bytes, v.weight);
    put_le(bytes, v.fg);
    put_le(bytes, v.bg);
  }
  const auto vox = with_ext(stem, ".vox");
  std::ofstream out(vox, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("cannot write " + vox.string());

  const Eigen::Quaterniond q = object.pose().quaternion();
  const Vec3& t = object.pose().translation();
  nlohmann::json j;
  j["id"] = object.id;
  j["pose"] = {{"t", {t.x(), t.y(), t.z()}}, {"q", {q.x(), q.y(), q.z(), q.w()}}};
  j["size"] = object.size();
  j["resolution"] = object.resolution();
  j["voxel_size"] = object.voxel_size();
  j["truncation_factor"] = object.volume.truncation_factor;
  j["existence"] = {object.existence.exists, object.existence.not_exists};
  j["class_distribution"] = object.class_distribution;
  j["detection_count"] = object.detection_count;
  j["memory_bytes"] = object.memory_bytes();
  const auto meta = with_ext(stem, ".json");
  std::ofstream mo(meta);
  mo << j.dump(2) << '\n';
  if (!mo) throw std::runtime_error("cannot write " + meta.string());
}

ObjectVolume read_volume_dump(const std::filesystem::path& stem) {
  const auto meta = with_ext(stem, ".json");
  std::ifstream mi(meta);
  if (!mi) throw std::runtime_error("cannot open " + meta.string());
  ObjectVolume o;
  try {
    const auto j = nlohmann::json::parse(mi);
    o.id = j.at("id").get<int>();
    const auto& t = j.at("pose").at("t");
    const auto& q = j.at("pose").at("q");
    o.volume.pose = Pose::from_quaternion(
        Eigen::Quaterniond(q.at(3).get<double>(), q.at(0).get<double>(), q.at(1).get<double>(),
                           q.at(2).get<double>()),
        Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>()));
    o.volume.grid = VoxelGrid(j.at("resolution").get<int>(), j.at("voxel_size").get<double>());
    o.volume.truncation_factor = j.at("truncation_factor").get<double>();
    o.existence.exists = j.at("existence").at(0).get<std::uint32_t>();
    o.existence.not_exists = j.at("existence").at(1).get<std::uint32_t>();
    o.class_distribution = j.at("class_distribution").get<std::vector<double>>();
    o.detection_count = j.at("detection_count").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(meta.string() + ": " + e.what());
  }

  const auto vox = with_ext(stem, ".vox");
  auto& voxels = o.volume.grid.voxels();
  if (!std::filesystem::exists(vox) || std::filesystem::file_size(vox) != voxels.size() * 10)
    throw std::runtime_error(vox.string() + ": missing or size does not match the sidecar");
  std::ifstream in(vox, std::ios::binary);
  std::vector<unsigned char> bytes(voxels.size() * 10);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  for (std::size_t i = 0; i < voxels.size(); ++i) {
    const unsigned char* p = bytes.data() + 10 * i;
    voxels[i] = {get_le<float>(p), get_le<std::uint16_t>(p + 4), get_le<std::uint16_t>(p + 6),
                 get_le<std::uint16_t>(p + 8)};
  }
  return o;
}

}  // namespace objslam
