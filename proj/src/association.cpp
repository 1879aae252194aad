#include "objslam/association.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace objslam {

void Detection::validate() const {
  if (class_dist.empty()) throw std::invalid_argument("empty class distribution");
  const double sum = std::accumulate(class_dist.begin(), class_dist.end(), 0.0);
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("class distribution must sum to 1");
}

double Detection::max_probability() const {
  return class_dist.empty() ? 0.0 : *std::max_element(class_dist.begin(), class_dist.end());
}

namespace {

bool touches_border(const Mask& m, int band) {
  const int w = m.width(), h = m.height();
  for (int y = 0; y < h; ++y) {
    const bool row_in_band = y < band || y >= h - band;
    for (int x = 0; x < w; ++x) {
      if (m(x, y) && (row_in_band || x < band || x >= w - band)) return true;
    }
  }
  return false;
}

}  // namespace

std::vector<Detection> filter_detections(std::vector<Detection> raw,
                                         const DetectionFilter& filter) {
  std::stable_sort(raw.begin(), raw.end(),
                   [](const Detection& a, const Detection& b) { return a.score > b.score; });
  if (raw.size() > static_cast<std::size_t>(filter.max_detections)) {
    raw.resize(static_cast<std::size_t>(filter.max_detections));
  }
  std::vector<Detection> out;
  for (auto& d : raw) {
    if (d.max_probability() <= filter.min_probability) continue;
    if (mask_area(d.mask) <= filter.min_area) continue;
    if (touches_border(d.mask, filter.border)) continue;
    out.push_back(std::move(d));
  }
  return out;
}

double detection_overlap(const Mask& rendered, const Mask& detection) {
  const std::size_t area = mask_area(detection);
  if (area == 0) return 0.0;
  return static_cast<double>(mask_intersection_area(rendered, detection)) /
         static_cast<double>(area);
}

AssociationResult associate(const std::vector<Detection>& detections,
                            const std::map<int, Mask>& rendered, double threshold) {
  AssociationResult out;
  std::map<int, std::vector<const Detection*>> groups;
  for (const auto& det : detections) {
    int best_id = -1;
    double best = threshold;
    // Ascending id order plus strict '>' keeps the lowest id on ties.
    for (const auto& [id, mask] : rendered) {
      const double a = detection_overlap(mask, det.mask);
      if (a > best) {
        best = a;
        best_id = id;
      }
    }
    out.assignment.push_back(best_id);
    if (best_id < 0) {
      out.unmatched.push_back(det);
    } else {
      groups[best_id].push_back(&det);
    }
  }
  for (const auto& [id, group] : groups) {
    Detection merged = *group.front();
    for (std::size_t g = 1; g < group.size(); ++g) {
      const Detection& d = *group[g];
      merged.mask = mask_union(merged.mask, d.mask);
      if (d.class_dist.size() != merged.class_dist.size()) {
        throw std::invalid_argument("detections disagree on the label set size");
      }
      for (std::size_t c = 0; c < d.class_dist.size(); ++c) merged.class_dist[c] += d.class_dist[c];
      merged.score = std::max(merged.score, d.score);
    }
    for (double& p : merged.class_dist) p /= static_cast<double>(group.size());
    out.matched.emplace(id, std::move(merged));
  }
  return out;
}

}  // namespace objslam
