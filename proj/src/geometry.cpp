#include "objslam/geometry.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace objslam {

namespace {

// Below this angle the trigonometric coefficients switch to their Taylor
// series; the closed forms lose digits to cancellation well before 1e-8.
constexpr double kSeriesAngle = 1e-4;
constexpr double kDegeneratePi = 1e-9;

struct SO3Coefficients {
  double a;  // sin(t)/t
  double b;  // (1-cos t)/t^2
  double c;  // (t - sin t)/t^3
};

SO3Coefficients so3_coefficients(double theta) {
  const double t2 = theta * theta;
  if (theta < kSeriesAngle) {
    return {1.0 - t2 / 6.0 + t2 * t2 / 120.0, 0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0};
  }
  const double s = std::sin(theta);
  const double co = std::cos(theta);
  return {s / theta, (1.0 - co) / t2, (theta - s) / (t2 * theta)};
}

Mat3 q_block(const Vec3& rho, const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 p = skew(omega);
  const Mat3 r = skew(rho);
  const Mat3 pr = p * r;
  const Mat3 rp = r * p;
  const Mat3 prp = pr * p;
  double c1, c2, c3;
  if (theta < 1e-2) {
    const double t2 = theta * theta;
    const double t4 = t2 * t2;
    c1 = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0;
    c2 = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0;
    c3 = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0;
  } else {
    const double s = std::sin(theta);
    const double co = std::cos(theta);
    const double t2 = theta * theta;
    c1 = (theta - s) / (t2 * theta);
    c2 = (t2 + 2.0 * co - 2.0) / (2.0 * t2 * t2);
    c3 = (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t2 * t2 * theta);
  }
  return 0.5 * r + c1 * (pr + rp + prp) + c2 * (p * pr + rp * p - 3.0 * prp) +
         c3 * (prp * p + p * prp);
}

}  // namespace

void Pose::normalize() {
  Eigen::JacobiSVD<Mat3> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  rotation_ = r;
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<    0.0, -v.z(),  v.y(),
        v.z(),    0.0, -v.x(),
       -v.y(),  v.x(),    0.0;
  // clang-format on
  return s;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const auto k = so3_coefficients(theta);
  const Mat3 w = skew(omega);
  return Mat3::Identity() + k.a * w + k.b * w * w;
}

Vec3 so3_log(const Mat3& rotation) {
  const Vec3 axis_sin(rotation(2, 1) - rotation(1, 2),
                      rotation(0, 2) - rotation(2, 0),
                      rotation(1, 0) - rotation(0, 1));
  const double sin_theta = 0.5 * axis_sin.norm();
  const double cos_theta = 0.5 * (rotation.trace() - 1.0);
  const double theta = std::atan2(sin_theta, cos_theta);
  if (std::numbers::pi - theta < kDegeneratePi) {
    throw GeometryError("so3_log: rotation angle is pi (degenerate axis sign)");
  }
  if (theta < kSeriesAngle) {
    // theta / sin(theta) ~ 1 + theta^2/6
    return 0.5 * (1.0 + theta * theta / 6.0) * axis_sin;
  }
  if (theta > std::numbers::pi - 1e-3) {
    // Near pi the antisymmetric part vanishes; recover the axis from R + I.
    const Mat3 sym = 0.5 * (rotation + rotation.transpose());
    const Mat3 aat = (sym - cos_theta * Mat3::Identity()) / (1.0 - cos_theta);
    int best = 0;
    aat.diagonal().maxCoeff(&best);
    Vec3 axis = aat.col(best).normalized();
    if (axis.dot(axis_sin) < 0.0) axis = -axis;
    return theta * axis;
  }
  return theta / (2.0 * sin_theta) * axis_sin;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const auto k = so3_coefficients(omega.norm());
  const Mat3 w = skew(omega);
  return Mat3::Identity() + k.b * w + k.c * w * w;
}

Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 w = skew(omega);
  double d;
  if (theta < kSeriesAngle) {
    const double t2 = theta * theta;
    d = 1.0 / 12.0 + t2 / 720.0;
  } else {
    d = 1.0 / (theta * theta) -
        (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() - 0.5 * w + d * w * w;
}

Pose se3_exp(const Twist& zeta) {
  const Vec3 rho = zeta.head<3>();
  const Vec3 omega = zeta.tail<3>();
  return {so3_exp(omega), so3_left_jacobian(omega) * rho};
}

Twist se3_log(const Pose& pose) {
  const Vec3 omega = so3_log(pose.rotation());
  Twist zeta;
  zeta.head<3>() = so3_left_jacobian_inverse(omega) * pose.translation();
  zeta.tail<3>() = omega;
  return zeta;
}

Mat6 se3_left_jacobian(const Twist& zeta) {
  const Vec3 rho = zeta.head<3>();
  const Vec3 omega = zeta.tail<3>();
  const Mat3 j = so3_left_jacobian(omega);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.topRightCorner<3, 3>() = q_block(rho, omega);
  return out;
}

Mat6 se3_left_jacobian_inverse(const Twist& zeta) {
  const Vec3 rho = zeta.head<3>();
  const Vec3 omega = zeta.tail<3>();
  const Mat3 ji = so3_left_jacobian_inverse(omega);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = ji;
  out.bottomRightCorner<3, 3>() = ji;
  out.topRightCorner<3, 3>() = -ji * q_block(rho, omega) * ji;
  return out;
}

Mat6 se3_right_jacobian_inverse(const Twist& zeta) {
  return se3_left_jacobian_inverse(-zeta);
}

Mat6 adjoint(const Pose& pose) {
  Mat6 out = Mat6::Zero();
  const Mat3& r = pose.rotation();
  out.topLeftCorner<3, 3>() = r;
  out.bottomRightCorner<3, 3>() = r;
  out.topRightCorner<3, 3>() = skew(pose.translation()) * r;
  return out;
}

double rotation_angle_between(const Pose& a, const Pose& b) {
  const Mat3 rel = a.rotation().transpose() * b.rotation();
  const double c = std::clamp(0.5 * (rel.trace() - 1.0), -1.0, 1.0);
  const Vec3 s(rel(2, 1) - rel(1, 2), rel(0, 2) - rel(2, 0), rel(1, 0) - rel(0, 1));
  return std::atan2(0.5 * s.norm(), c);
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw std::invalid_argument("intrinsics: focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw std::invalid_argument("intrinsics: image size must be positive");
  }
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::level(int l) const {
  Intrinsics k = *this;
  for (int i = 0; i < l; ++i) {
    k.fx *= 0.5;
    k.fy *= 0.5;
    k.cx = (k.cx + 0.5) * 0.5 - 0.5;
    k.cy = (k.cy + 0.5) * 0.5 - 0.5;
    k.width /= 2;
    k.height /= 2;
  }
  return k;
}

Vec2 project(const Intrinsics& k, const Vec3& p) {
  if (!(p.z() > 0.0)) {
    throw GeometryError("project: point is not in front of the camera");
  }
  return k.project_unchecked(p);
}

Vec3 backproject(const Intrinsics& k, const Vec2& u, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw GeometryError("backproject: invalid depth");
  }
  if (!k.contains(u)) {
    throw GeometryError("backproject: pixel outside the image");
  }
  return k.backproject_unchecked(u.x(), u.y(), depth);
}

}  // namespace objslam
