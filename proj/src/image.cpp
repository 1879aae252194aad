#include "objslam/image.hpp"

#include <algorithm>

namespace objslam {

namespace {

// Separable min/max filter with a square window; out-of-image pixels act as
// background (0) for both operations.
Mask morph(const Mask& mask, int radius, bool erode_op) {
  if (radius <= 0) return mask;
  const int w = mask.width();
  const int h = mask.height();
  Mask tmp(w, h);
  Mask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = erode_op ? 1 : 0;
      for (int dx = -radius; dx <= radius; ++dx) {
        const int xx = x + dx;
        const std::uint8_t m = (xx >= 0 && xx < w) ? mask(xx, y) : 0;
        v = erode_op ? std::min(v, m) : std::max(v, m);
      }
      tmp(x, y) = v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::uint8_t v = erode_op ? 1 : 0;
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        const std::uint8_t m = (yy >= 0 && yy < h) ? tmp(x, yy) : 0;
        v = erode_op ? std::min(v, m) : std::max(v, m);
      }
      out(x, y) = v;
    }
  }
  return out;
}

}  // namespace

std::size_t mask_area(const Mask& mask) {
  std::size_t n = 0;
  for (auto v : mask.values()) n += v != 0;
  return n;
}

Mask erode(const Mask& mask, int radius) { return morph(mask, radius, true); }
Mask dilate(const Mask& mask, int radius) { return morph(mask, radius, false); }

Mask mask_union(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask_union: shape mismatch");
  Mask out(a.width(), a.height());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] || b[i]) ? 1 : 0;
  return out;
}

std::size_t mask_intersection_area(const Mask& a, const Mask& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("mask intersection: shape mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) n += (a[i] && b[i]) ? 1 : 0;
  return n;
}

}  // namespace objslam
