// Forward-generated correspondence sets with a known transform.
#pragma once

#include "objslam/reloc.hpp"

#include <random>

namespace objslam::testing {

struct CorrespondenceSet {
  Pose truth;
  std::vector<Vec3> src, dst;
  std::vector<bool> inlier;
};

/// Sources uniform in a 1 m cube, dst = truth * src for inliers. Outliers are
/// displaced from their true position by 0.2-1.0 m, i.e. clearly beyond any
/// inlier threshold used here.
inline CorrespondenceSet make_correspondences(std::uint64_t seed, int count,
                                              double outlier_ratio) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5), mag(0.2, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  CorrespondenceSet c;
  c.truth = Pose::from_quaternion(Eigen::Quaterniond(n(rng), n(rng), n(rng), n(rng)),
                                  Vec3(n(rng), n(rng), n(rng)));
  const int outliers = static_cast<int>(std::lround(outlier_ratio * count));
  for (int i = 0; i < count; ++i) {
    const Vec3 s(u(rng), u(rng), u(rng));
    Vec3 d = c.truth * s;
    const bool in = i >= outliers;
    if (!in) d += Vec3(n(rng), n(rng), n(rng)).normalized() * mag(rng);
    c.src.push_back(s);
    c.dst.push_back(d);
    c.inlier.push_back(in);
  }
  // Interleave so outliers are not a contiguous block.
  std::vector<int> order(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  CorrespondenceSet s = c;
  for (int i = 0; i < count; ++i) {
    s.src[i] = c.src[order[i]];
    s.dst[i] = c.dst[order[i]];
    s.inlier[i] = c.inlier[order[i]];
  }
  return s;
}

/// Largest distance between the recovered and true transforms over the inliers.
inline double inlier_error(const CorrespondenceSet& c, const Pose& t) {
  double worst = 0.0;
  for (std::size_t i = 0; i < c.src.size(); ++i) {
    if (c.inlier[i]) worst = std::max(worst, (t * c.src[i] - c.truth * c.src[i]).norm());
  }
  return worst;
}

}  // namespace objslam::testing
