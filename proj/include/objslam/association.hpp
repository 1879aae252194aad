// Detection filtering and mask-overlap association to existing objects.
#pragma once

#include "objslam/image.hpp"

#include <map>
#include <vector>

namespace objslam {

struct Detection {
  Mask mask;
  std::vector<double> class_dist;
  double score = 0.0;

  /// Throws std::invalid_argument when the distribution does not sum to 1.
  void validate() const;
  double max_probability() const;
};

struct DetectionFilter {
  int max_detections = 100;
  int border = 20;              // pixels; any mask pixel inside the band drops it
  double min_probability = 0.5; // strict
  std::size_t min_area = 2500;  // strict
};

std::vector<Detection> filter_detections(std::vector<Detection> raw,
                                         const DetectionFilter& filter = {});

/// |M_o n M_i| / |M_i|; zero for an empty detection.
double detection_overlap(const Mask& rendered, const Mask& detection);

struct AssociationResult {
  std::map<int, Detection> matched;  // volume id -> merged detection
  std::vector<Detection> unmatched;
  std::vector<int> assignment;       // per input detection: volume id or -1
};

/// Assigns each detection to the rendered mask with the largest overlap when it
/// exceeds `threshold` (ties to the lowest id). Detections sharing a volume are
/// merged: mask union, mean class distribution, max score.
AssociationResult associate(const std::vector<Detection>& detections,
                            const std::map<int, Mask>& rendered, double threshold = 0.2);

}  // namespace objslam
