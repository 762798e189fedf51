// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <utility>

#include "edgevio/so3.hpp"

namespace edgevio {

/// Pinhole camera with radial-tangential distortion plus the body->camera
/// extrinsic transform (X_body = R_bc * X_cam + p_bc).
struct CameraModel {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  double k1 = 0, k2 = 0, p1 = 0, p2 = 0;
  Quat q_bc = Quat::Identity();
  Vec3 p_bc = Vec3::Zero();
  int width = 0, height = 0;

  void validate() const {
    if (fx <= 0 || fy <= 0) throw ConfigError("camera: focal lengths must be positive");
    if (std::abs(q_bc.norm() - 1.0) > 1e-6)
      throw ConfigError("camera: extrinsic rotation is not unit");
  }

  Mat3 R_bc() const { return q_bc.toRotationMatrix(); }
  double mean_focal() const { return 0.5 * (fx + fy); }

  Vec2 distort(const Vec2& n) const {
    const double x = n.x(), y = n.y();
    const double r2 = x * x + y * y;
    const double radial = 1.0 + k1 * r2 + k2 * r2 * r2;
    return {x * radial + 2 * p1 * x * y + p2 * (r2 + 2 * x * x),
            y * radial + 2 * p2 * x * y + p1 * (r2 + 2 * y * y)};
  }

  /// Iterative inversion of the distortion map; throws on divergence.
  Vec2 undistort(const Vec2& nd) const {
    if (k1 == 0 && k2 == 0 && p1 == 0 && p2 == 0) return nd;
    Vec2 n = nd;
    for (int i = 0; i < 12; ++i) {
      const Vec2 d = distort(n) - n;  // distortion offset at current estimate
      n = nd - d;
    }
    if ((distort(n) - nd).norm() > 1e-8)
      throw Error("undistort: divergence outside the calibrated field");
    return n;
  }

  /// Camera-frame point to pixel; requires z > 0.
  std::optional<Vec2> project(const Vec3& X) const {
    if (X.z() <= 1e-9) return std::nullopt;
    const Vec2 d = distort({X.x() / X.z(), X.y() / X.z()});
    return Vec2(fx * d.x() + cx, fy * d.y() + cy);
  }

  /// Pixel to unit bearing on the sphere (undistort, back-project, normalize).
  Vec3 unit_bearing(const Vec2& px) const {
    const Vec2 n = undistort({(px.x() - cx) / fx, (px.y() - cy) / fy});
    return Vec3(n.x(), n.y(), 1.0).normalized();
  }
};

inline Vec3 project_to_unit_sphere(const Vec2& obs, const CameraModel& cam) {
  return cam.unit_bearing(obs);
}

/// Two unit vectors spanning the tangent plane of unit vector P: Gram-Schmidt
/// of the coordinate axis least aligned with P, then the cross product.
inline std::pair<Vec3, Vec3> tangent_basis(const Vec3& P) {
  int least = 0;
  double best = std::abs(P.x());
  if (std::abs(P.y()) < best) {
    least = 1;
    best = std::abs(P.y());
  }
  if (std::abs(P.z()) < best) least = 2;
  Vec3 e = Vec3::Zero();
  e(least) = 1.0;
  const Vec3 b1 = (e - e.dot(P) * P).normalized();
  return {b1, P.cross(b1)};
}

}  // namespace edgevio
