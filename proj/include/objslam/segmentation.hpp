// Per-frame instance detections: ground truth with controllable corruption,
// files on disk, and an asynchronous wrapper around either.
#pragma once

#include "objslam/association.hpp"
#include "objslam/synthworld.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <future>
#include <memory>
#include <optional>
#include <vector>

namespace objslam {

class MaskSource {
 public:
  explicit MaskSource(int cadence = 30);
  virtual ~MaskSource() = default;

  int cadence() const { return cadence_; }
  bool is_detection_frame(int frame) const { return frame >= 0 && frame % cadence_ == 0; }

  /// Nullopt off-cadence; otherwise the (possibly empty) detection list.
  std::optional<std::vector<Detection>> detections_for(int frame) const;

 protected:
  virtual std::vector<Detection> produce(int frame) const = 0;

 private:
  int cadence_;
};

struct MaskCorruption {
  int jitter = 0;                // per-instance erosion/dilation radius drawn from [-jitter, jitter]
  double dropout = 0.0;          // per-instance probability of being missed
  double false_positives = 0.0;  // expected spurious blobs per detection frame
  double softening = 0.0;        // mass moved from the true class to a uniform spread
  double score = 0.95;
};

/// Masks from the rendered ground-truth index map of a synthetic sequence.
/// Each frame draws from its own RNG stream seeded by (seed, frame), so output
/// does not depend on query order.
class GroundTruthSource final : public MaskSource {
 public:
  GroundTruthSource(SequenceSpec sequence, MaskCorruption corruption = {},
                    std::uint64_t seed = 0, int cadence = 30);

  /// Detections from an already-rendered index map (skips re-rendering).
  std::vector<Detection> from_index(const InstanceImage& index, int frame) const;

 protected:
  std::vector<Detection> produce(int frame) const override;

 private:
  SequenceSpec sequence_;
  MaskCorruption corruption_;
  std::uint64_t seed_;
};

/// <dir>/<frame>.idx: little-endian uint16 raster, row-major, 0 = background.
/// <dir>/<frame>.txt: one line per instance, "id score p_1 ... p_L".
/// Frame names are zero-padded to six digits.
class FileMaskSource final : public MaskSource {
 public:
  FileMaskSource(std::filesystem::path dir, int width, int height, int cadence = 30);

 protected:
  std::vector<Detection> produce(int frame) const override;

 private:
  std::filesystem::path dir_;
  int width_;
  int height_;
};

struct MaskFileEntry {
  int id = 0;
  double score = 0.0;
  std::vector<double> class_dist;
};

std::filesystem::path mask_raster_path(const std::filesystem::path& dir, int frame);
std::filesystem::path mask_sidecar_path(const std::filesystem::path& dir, int frame);
void write_mask_files(const std::filesystem::path& dir, int frame, const InstanceImage& index,
                      const std::vector<MaskFileEntry>& entries);

/// Runs a source on a worker task. Requests are queued by frame index and
/// results are handed back in request order; `poll` returns whatever has
/// finished without blocking, so when results arrive depends on timing.
class AsyncMaskSource {
 public:
  struct Result {
    int frame = 0;
    std::vector<Detection> detections;
  };

  explicit AsyncMaskSource(std::shared_ptr<const MaskSource> source);
  ~AsyncMaskSource();

  /// Queues work for a detection frame; ignored off-cadence.
  void request(int frame);
  std::vector<Result> poll();
  /// Blocks for every outstanding request.
  std::vector<Result> drain();
  std::size_t pending() const { return queue_.size(); }

 private:
  std::shared_ptr<const MaskSource> source_;
  std::deque<std::pair<int, std::future<std::vector<Detection>>>> queue_;
};

}  // namespace objslam
