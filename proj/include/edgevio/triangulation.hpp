// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <optional>
#include <vector>

#include "edgevio/factors.hpp"

namespace edgevio {

/// One non-anchor view for triangulation: the rigid transform taking
/// anchor-camera coordinates into this camera (X_view = R * X_anchor + t)
/// plus the measured unit bearing in this camera.
struct TriangulationView {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();
  Vec3 bearing = Vec3::UnitZ();
};

struct TriangulationOptions {
  double min_depth = 0.1;              // meters along the anchor bearing
  double min_parallax_deg = 0.5;
};

/// Linear multi-view triangulation of the range d along the anchor bearing,
/// returning the inverse depth lambda = 1/d. Cross-product constraints
/// b_j x (R_j b_i d + t_j) = 0 are stacked into scalar least squares.
/// nullopt when parallax or the recovered depth is insufficient.
inline std::optional<double> triangulate(const Vec3& anchor_bearing,
                                         std::span<const TriangulationView> views,
                                         const TriangulationOptions& opt = {}) {
  if (views.empty()) return std::nullopt;

  double max_parallax = 0.0;
  for (const auto& v : views) {
    const Vec3 rotated = v.R * anchor_bearing;
    const double c = std::clamp(rotated.dot(v.bearing), -1.0, 1.0);
    max_parallax = std::max(max_parallax, std::acos(c));
  }
  if (max_parallax < opt.min_parallax_deg * M_PI / 180.0) return std::nullopt;

  double num = 0.0, den = 0.0;
  for (const auto& v : views) {
    const Vec3 a = hat(v.bearing) * (v.R * anchor_bearing);
    const Vec3 b = hat(v.bearing) * v.t;
    num -= a.dot(b);
    den += a.squaredNorm();
  }
  if (den < 1e-18) return std::nullopt;
  const double depth = num / den;
  if (depth <= opt.min_depth) return std::nullopt;
  return 1.0 / depth;
}

/// Relative camera transform between two body states and a shared extrinsic:
/// X_{c_to} = R * X_{c_from} + t.
inline std::pair<Mat3, Vec3> relative_camera_transform(const ImuState& from, const ImuState& to,
                                                       const CameraModel& cam) {
  const Mat3 R_bc = cam.R_bc();
  const Mat3 R_w_cf = from.R() * R_bc;
  const Vec3 p_w_cf = from.R() * cam.p_bc + from.p;
  const Mat3 R_w_ct = to.R() * R_bc;
  const Vec3 p_w_ct = to.R() * cam.p_bc + to.p;
  return {R_w_ct.transpose() * R_w_cf, R_w_ct.transpose() * (p_w_cf - p_w_ct)};
}

}  // namespace edgevio
