// Shared fixtures for the unit tests.
#pragma once

#include "objslam/geometry.hpp"

#include <random>

namespace objslam::testing {

inline Twist random_twist(std::mt19937_64& rng, double trans_scale, double rot_scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Twist z;
  for (int i = 0; i < 3; ++i) z[i] = trans_scale * n(rng);
  for (int i = 3; i < 6; ++i) z[i] = rot_scale * n(rng);
  return z;
}

inline Pose random_pose(std::mt19937_64& rng, double trans_scale = 1.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  return Pose::from_quaternion(q, Vec3(n(rng), n(rng), n(rng)) * trans_scale);
}

}  // namespace objslam::testing
