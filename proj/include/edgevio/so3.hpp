// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include "edgevio/common.hpp"

namespace edgevio {

/// Skew-symmetric (cross-product) matrix of a 3-vector.
inline Mat3 hat(const Vec3& a) {
  Mat3 m;
  m << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return m;
}

/// Quaternion exponential of a rotation vector.
inline Quat quat_exp(const Vec3& theta) {
  const double n = theta.norm();
  if (n < 1e-12) {
    Quat q(1.0, 0.5 * theta.x(), 0.5 * theta.y(), 0.5 * theta.z());
    q.normalize();
    return q;
  }
  const double half = 0.5 * n;
  const Vec3 axis = theta / n;
  return Quat(Eigen::AngleAxisd(n, axis));
}

/// Rotation-vector logarithm of a unit quaternion (angle in [0, pi]).
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in;
  if (q.w() < 0) q.coeffs() *= -1;
  const double vn = q.vec().norm();
  if (vn < 1e-12) return 2.0 * q.vec();
  const double angle = 2.0 * std::atan2(vn, q.w());
  return angle * q.vec() / vn;
}

/// Left quaternion product matrix: Qleft(p) * q_vec4 = (p*q) as [w,xyz].
inline Mat<4, 4> quat_left(const Quat& p) {
  Mat<4, 4> m;
  m(0, 0) = p.w();
  m.block<1, 3>(0, 1) = -p.vec().transpose();
  m.block<3, 1>(1, 0) = p.vec();
  m.block<3, 3>(1, 1) = p.w() * Mat3::Identity() + hat(p.vec());
  return m;
}

/// Right quaternion product matrix: Qright(q) * p_vec4 = (p*q) as [w,xyz].
inline Mat<4, 4> quat_right(const Quat& q) {
  Mat<4, 4> m;
  m(0, 0) = q.w();
  m.block<1, 3>(0, 1) = -q.vec().transpose();
  m.block<3, 1>(1, 0) = q.vec();
  m.block<3, 3>(1, 1) = q.w() * Mat3::Identity() - hat(q.vec());
  return m;
}

/// Right Jacobian of SO(3): Exp(phi + d) = Exp(phi) Exp(Jr(phi) d) + O(d^2).
inline Mat3 right_jacobian_so3(const Vec3& phi) {
  const double t = phi.norm();
  const Mat3 W = hat(phi);
  if (t < 1e-8) return Mat3::Identity() - 0.5 * W;
  return Mat3::Identity() - (1.0 - std::cos(t)) / (t * t) * W +
         (t - std::sin(t)) / (t * t * t) * W * W;
}

/// Rotation angle |arccos((tr(R)-1)/2)|, argument clamped to [-1,1].
/// Rejects matrices that are not orthonormal within 1e-6.
inline double rotation_angle(const Mat3& R) {
  if ((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6 ||
      R.determinant() < 0.0)
    throw Error("rotation_angle: input is not a rotation matrix");
  const double c = std::clamp((R.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::abs(std::acos(c));
}

inline double rotation_angle(const Quat& q) {
  if (std::abs(q.norm() - 1.0) > 1e-6) throw Error("rotation_angle: quaternion not unit");
  return 2.0 * std::atan2(q.vec().norm(), std::abs(q.w()));
}

}  // namespace edgevio
