// Dense row-major images and small raster utilities shared by every module.
#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace objslam {

template <typename T>
class Image {
 public:
  Image() = default;
  Image(int width, int height, const T& fill = T{})
      : width_(width), height_(height),
        data_(static_cast<std::size_t>(width) * height, fill) {
    if (width < 0 || height < 0) throw std::invalid_argument("negative image size");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& operator()(int x, int y) const {
    return data_[static_cast<std::size_t>(y) * width_ + x];
  }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width_ && y < height_;
  }
  bool same_shape(int w, int h) const { return w == width_ && h == height_; }
  template <typename U>
  bool same_shape(const Image<U>& o) const {
    return o.width() == width_ && o.height() == height_;
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  void fill(const T& v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Image& o) const {
    return width_ == o.width_ && height_ == o.height_ && data_ == o.data_;
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<T> data_;
};

/// Depth in metres; zero or non-finite means invalid.
using DepthImage = Image<float>;
/// Binary mask, 0 or 1.
using Mask = Image<std::uint8_t>;
using Rgb = std::array<std::uint8_t, 3>;
using RgbImage = Image<Rgb>;
/// Per-pixel 3-vector; invalid entries hold NaN.
using PointMap = Image<Eigen::Vector3d>;

inline bool valid_depth(float d) { return d > 0.0f && std::isfinite(d); }

inline Eigen::Vector3d invalid_point() {
  return Eigen::Vector3d::Constant(std::numeric_limits<double>::quiet_NaN());
}
inline bool valid_point(const Eigen::Vector3d& p) { return !std::isnan(p.x()); }

std::size_t mask_area(const Mask& mask);
/// Erosion by a (2r+1)x(2r+1) square structuring element; pixels outside the
/// image count as background.
Mask erode(const Mask& mask, int radius);
Mask dilate(const Mask& mask, int radius);
Mask mask_union(const Mask& a, const Mask& b);
std::size_t mask_intersection_area(const Mask& a, const Mask& b);

}  // namespace objslam
