// SE(3) manifold math and the pinhole camera model.
//
// Twists are ordered (translational, rotational): zeta = [rho; omega].
// Two perturbation conventions are used in the system and both are spelled
// out in the function names: perturb_left (exp(zeta) * T, used by ICP) and
// perturb_right (T * exp(zeta), used by the pose graph).
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <stdexcept>
#include <string>

namespace objslam {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// 6-vector (rho, omega) in metres / radians.
using Twist = Vec6;

class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Rigid transform mapping coordinates of one frame into another.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
    return {q.normalized().toRotationMatrix(), t};
  }
  static Pose from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Eigen::Quaterniond quaternion() const {
    Eigen::Quaterniond q(rotation_);
    q.normalize();
    // Canonical hemisphere keeps serialisation stable.
    if (q.w() < 0.0) q.coeffs() = -q.coeffs();
    return q;
  }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation_;
    m.topRightCorner<3, 1>() = translation_;
    return m;
  }

  Pose inverse() const {
    const Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }

  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }
  Pose operator*(const Pose& other) const {
    return {rotation_ * other.rotation_,
            rotation_ * other.translation_ + translation_};
  }

  Vec3 rotate(const Vec3& v) const { return rotation_ * v; }

  /// Re-orthonormalises the rotation (polar projection via SVD).
  void normalize();

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

Mat3 skew(const Vec3& v);

Mat3 so3_exp(const Vec3& omega);
/// Throws GeometryError when the rotation angle is within 1e-9 of pi.
Vec3 so3_log(const Mat3& rotation);
Mat3 so3_left_jacobian(const Vec3& omega);
Mat3 so3_left_jacobian_inverse(const Vec3& omega);

Pose se3_exp(const Twist& zeta);
/// Inverse of se3_exp for rotation angles below pi. Throws GeometryError at
/// the degenerate angle pi.
Twist se3_log(const Pose& pose);

/// Left Jacobian of SE(3): exp(zeta + d) ~= exp(J_l(zeta) d) exp(zeta).
Mat6 se3_left_jacobian(const Twist& zeta);
Mat6 se3_left_jacobian_inverse(const Twist& zeta);
/// Right Jacobian, J_r(zeta) = J_l(-zeta).
Mat6 se3_right_jacobian_inverse(const Twist& zeta);

/// exp(adjoint(P) zeta) = P exp(zeta) P^-1.
Mat6 adjoint(const Pose& pose);

inline Pose perturb_left(const Pose& pose, const Twist& zeta) {
  return se3_exp(zeta) * pose;
}
inline Pose perturb_right(const Pose& pose, const Twist& zeta) {
  return pose * se3_exp(zeta);
}

/// Angle of the relative rotation between two poses, radians.
double rotation_angle_between(const Pose& a, const Pose& b);

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws std::invalid_argument when the invariants do not hold.
  void validate() const;

  /// Intrinsics for a pyramid level built by 2x2 averaging (level 0 = this).
  Intrinsics level(int l) const;

  Vec2 project_unchecked(const Vec3& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy};
  }
  Vec3 backproject_unchecked(double u, double v, double depth) const {
    return {(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
  }
  bool contains(const Vec2& px) const {
    return px.x() >= 0.0 && px.y() >= 0.0 && px.x() <= width - 1.0 &&
           px.y() <= height - 1.0;
  }
};

/// u = K pi(p). Throws GeometryError for p.z <= 0.
Vec2 project(const Intrinsics& k, const Vec3& p);
/// K^-1 d [u, 1]. Throws GeometryError for non-positive depth or a pixel
/// outside the image.
Vec3 backproject(const Intrinsics& k, const Vec2& u, double depth);

}  // namespace objslam
