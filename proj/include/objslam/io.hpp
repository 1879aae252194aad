// Dataset ingestion (TUM RGB-D layout, PNG rasters), trajectory files, ATE and
// volume dumps.
#pragma once

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/object_volume.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace objslam {

// --- PNG ------------------------------------------------------------------

/// 16-bit greyscale; 8-bit inputs are widened. Throws on decode failure.
Image<std::uint16_t> read_png_u16(const std::filesystem::path& path);
/// Any colour type is converted to 8-bit RGB.
RgbImage read_png_rgb(const std::filesystem::path& path);
void write_png_u16(const std::filesystem::path& path, const Image<std::uint16_t>& image);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& image);

/// Metres -> raw units (rounded, clamped to 16 bits; invalid -> 0), and back.
Image<std::uint16_t> encode_depth(const DepthImage& depth, double units_per_metre = 5000.0);
DepthImage decode_depth(const Image<std::uint16_t>& raw, double units_per_metre = 5000.0);

// --- Trajectories -----------------------------------------------------------

struct TimedPose {
  double timestamp = 0.0;
  Pose pose;
};

struct TrajectoryRecord {
  std::vector<TimedPose> poses;
  /// Throws std::invalid_argument on decreasing timestamps.
  void validate() const;
};

/// "timestamp tx ty tz qx qy qz qw" per line, 6 decimals, qw >= 0.
void write_trajectory(std::ostream& os, const TrajectoryRecord& record);
void write_trajectory(const std::filesystem::path& path, const TrajectoryRecord& record);
/// Reads the same format (and TUM groundtruth.txt); '#' lines are comments.
/// Quaternions must be unit within 1e-6 after the 6-decimal rounding budget
/// (|q| within 1e-5) and are renormalised.
TrajectoryRecord read_trajectory(std::istream& is, const std::string& name = "<stream>");
TrajectoryRecord read_trajectory(const std::filesystem::path& path);

/// Pairs a[i] with b[j] (|dt| <= max_dt), greedily by smallest |dt|, each
/// entry used once; returned in increasing order of a's timestamps.
std::vector<std::pair<std::size_t, std::size_t>> associate_timestamps(
    const std::vector<double>& a, const std::vector<double>& b, double max_dt = 0.02);

struct AteResult {
  double rmse = 0.0;              // metres
  std::size_t matches = 0;
  Pose alignment;                 // applied to the estimate
  double mean_rotation_deg = 0.0; // diagnostics only
};

/// Throws std::invalid_argument ("too few matches") below 3 pairs.
AteResult evaluate_ate(const TrajectoryRecord& estimate, const TrajectoryRecord& truth,
                       double max_dt = 0.02);
inline double ate_rmse(const TrajectoryRecord& estimate, const TrajectoryRecord& truth) {
  return evaluate_ate(estimate, truth).rmse;
}

// --- TUM RGB-D ----------------------------------------------------------------

struct TumEntry {
  double rgb_time = 0.0;
  double depth_time = 0.0;
  std::filesystem::path rgb;
  std::filesystem::path depth;
};

struct TumFrame {
  int index = 0;
  double timestamp = 0.0;  // rgb timestamp
  RgbImage rgb;
  DepthImage depth;
};

/// Reads rgb.txt / depth.txt (and groundtruth.txt when present) and yields
/// associated frames one at a time; images are decoded on demand.
class TumReader {
 public:
  explicit TumReader(const std::filesystem::path& dir, double max_dt = 0.02,
                     double depth_units_per_metre = 5000.0);

  const std::vector<TumEntry>& entries() const { return entries_; }
  std::size_t skipped() const { return skipped_; }
  const std::optional<TrajectoryRecord>& groundtruth() const { return groundtruth_; }

  std::optional<TumFrame> next();
  TumFrame load(std::size_t i) const;

 private:
  std::filesystem::path dir_;
  double depth_scale_;
  std::vector<TumEntry> entries_;
  std::size_t skipped_ = 0;
  std::size_t cursor_ = 0;
  std::optional<TrajectoryRecord> groundtruth_;
};

// --- Volume dumps -------------------------------------------------------------

/// <stem>.vox: little-endian voxels (f32 sdf, u16 weight, u16 fg, u16 bg),
/// x fastest. <stem>.json: id, pose, edge length, resolution, voxel size,
/// truncation factor, existence counts, class distribution, detections.
void write_volume_dump(const std::filesystem::path& stem, const ObjectVolume& object);
ObjectVolume read_volume_dump(const std::filesystem::path& stem);

}  // namespace objslam
