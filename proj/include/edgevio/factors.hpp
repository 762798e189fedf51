// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <Eigen/Dense>

#include "edgevio/camera.hpp"
#include "edgevio/imu.hpp"

namespace edgevio {

/// IMU state (Eq. 1): pose, velocity and sensor biases at one image time.
struct ImuState {
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
  Vec3 bg = Vec3::Zero();
  double timestamp = 0.0;
  int frame_idx = -1;

  Mat3 R() const { return q.toRotationMatrix(); }
};

/// Local 15-dim box-plus: position/velocity/bias additive, attitude by a
/// right quaternion perturbation.
inline ImuState boxplus(const ImuState& x, const Eigen::Matrix<double, 15, 1>& d) {
  ImuState y = x;
  y.p += d.segment<3>(0);
  y.q = (x.q * quat_exp(d.segment<3>(3))).normalized();
  y.v += d.segment<3>(6);
  y.ba += d.segment<3>(9);
  y.bg += d.segment<3>(12);
  return y;
}

inline Eigen::Matrix<double, 15, 1> boxminus(const ImuState& x, const ImuState& x0) {
  Eigen::Matrix<double, 15, 1> d;
  d.segment<3>(0) = x.p - x0.p;
  d.segment<3>(3) = quat_log(Quat(x0.q.conjugate() * x.q));
  d.segment<3>(6) = x.v - x0.v;
  d.segment<3>(9) = x.ba - x0.ba;
  d.segment<3>(12) = x.bg - x0.bg;
  return d;
}

// ---------------------------------------------------------------------------
// Reprojection residual (Eq. 12): the anchor bearing at inverse depth lambda,
// transformed into frame j, compared on the unit sphere against the measured
// bearing and projected onto the measurement's tangent plane.
// ---------------------------------------------------------------------------

struct ReprojResult {
  Vec2 residual = Vec2::Zero();
  Mat<2, 6> J_pose_i = Mat<2, 6>::Zero();  // d r / d (p_i, theta_i)
  Mat<2, 6> J_pose_j = Mat<2, 6>::Zero();
  Vec2 J_lambda = Vec2::Zero();
  bool valid = false;  // false when the landmark lands behind camera j
};

/// `weight` is the whitening factor (focal / pixel sigma); pass 1 for raw
/// bearing-unit residuals.
inline ReprojResult reprojection_residual(const ImuState& si, const ImuState& sj, double lambda,
                                          const Vec3& bearing_i, const Vec3& bearing_j,
                                          const CameraModel& cam, double weight = 1.0) {
  ReprojResult out;
  if (lambda <= 0.0) return out;
  const Mat3 R_bc = cam.R_bc();
  const Mat3 Ri = si.R(), Rj = sj.R();

  const Vec3 P_ci = bearing_i / lambda;
  const Vec3 X_bi = R_bc * P_ci + cam.p_bc;
  const Vec3 X_w = Ri * X_bi + si.p;
  const Vec3 X_bj = Rj.transpose() * (X_w - sj.p);
  const Vec3 X_cj = R_bc.transpose() * (X_bj - cam.p_bc);
  if (X_cj.z() <= 0.0) return out;

  const double n = X_cj.norm();
  const Vec3 u = X_cj / n;
  const auto [b1, b2] = tangent_basis(bearing_j);
  Mat<2, 3> T;
  T.row(0) = b1.transpose();
  T.row(1) = b2.transpose();

  out.residual = weight * T * (bearing_j - u);

  const Mat3 du_dX = (Mat3::Identity() - u * u.transpose()) / n;
  const Mat<2, 3> G = -weight * T * du_dX;

  const Mat3 RbcT_RjT = R_bc.transpose() * Rj.transpose();
  out.J_pose_i.block<2, 3>(0, 0) = G * RbcT_RjT;
  out.J_pose_i.block<2, 3>(0, 3) = G * RbcT_RjT * (-Ri * hat(X_bi));
  out.J_pose_j.block<2, 3>(0, 0) = -G * RbcT_RjT;
  out.J_pose_j.block<2, 3>(0, 3) = G * R_bc.transpose() * hat(X_bj);
  out.J_lambda = G * (RbcT_RjT * Ri * R_bc) * (-bearing_i / (lambda * lambda));
  out.valid = true;
  return out;
}

// ---------------------------------------------------------------------------
// IMU preintegration residual: 15-vector (p, theta, v, ba, bg), oriented as
// measured-minus-predicted, whitened by the preintegrated sqrt information.
// ---------------------------------------------------------------------------

struct ImuFactorResult {
  Eigen::Matrix<double, 15, 1> residual = Eigen::Matrix<double, 15, 1>::Zero();
  Mat<15, 15> J_i = Mat<15, 15>::Zero();
  Mat<15, 15> J_j = Mat<15, 15>::Zero();
};

/// Square root of the information matrix of a preintegrated factor.
/// Throws when the covariance is not invertible.
inline Mat<15, 15> sqrt_information(const PreintegratedImu& pre) {
  const Mat<15, 15> cov = 0.5 * (pre.covariance + pre.covariance.transpose());
  const Eigen::LDLT<Mat<15, 15>> ldlt(cov);
  if (ldlt.info() != Eigen::Success || ldlt.vectorD().minCoeff() <= 0.0)
    throw Error("imu_residual: preintegrated covariance is not invertible");
  const Mat<15, 15> info = ldlt.solve(Mat<15, 15>::Identity());
  return Eigen::LLT<Mat<15, 15>>(0.5 * (info + info.transpose())).matrixL().transpose();
}

inline ImuFactorResult imu_residual(const ImuState& si, const ImuState& sj,
                                    const PreintegratedImu& pre, const Vec3& gravity,
                                    const Mat<15, 15>* sqrt_info = nullptr) {
  ImuFactorResult out;
  const double dt = pre.dt_total;
  const Mat3 RiT = si.R().transpose();

  const Vec3 dba = si.ba - pre.ref_ba;
  const Vec3 dbg = si.bg - pre.ref_bg;
  const Quat dq_hat = (pre.delta_q * quat_exp(pre.dq_dbg() * dbg)).normalized();
  const Vec3 dv_hat = pre.delta_v + pre.dv_dba() * dba + pre.dv_dbg() * dbg;
  const Vec3 dp_hat = pre.delta_p + pre.dp_dba() * dba + pre.dp_dbg() * dbg;

  const Vec3 alpha = sj.p - si.p - si.v * dt - 0.5 * gravity * dt * dt;
  const Vec3 beta = sj.v - si.v - gravity * dt;

  Quat q_err = si.q.conjugate() * sj.q;       // predicted relative rotation
  q_err = (q_err.conjugate() * dq_hat);       // measured minus predicted
  if (q_err.w() < 0) q_err.coeffs() *= -1;

  out.residual.segment<3>(0) = dp_hat - RiT * alpha;
  out.residual.segment<3>(3) = 2.0 * q_err.vec();
  out.residual.segment<3>(6) = dv_hat - RiT * beta;
  out.residual.segment<3>(9) = sj.ba - si.ba;
  out.residual.segment<3>(12) = sj.bg - si.bg;

  // state i
  out.J_i.block<3, 3>(0, 0) = RiT;
  out.J_i.block<3, 3>(0, 3) = -hat(RiT * alpha);
  out.J_i.block<3, 3>(0, 6) = RiT * dt;
  out.J_i.block<3, 3>(0, 9) = pre.dp_dba();
  out.J_i.block<3, 3>(0, 12) = pre.dp_dbg();
  const Quat qji = sj.q.conjugate() * si.q;
  out.J_i.block<3, 3>(3, 3) = (quat_left(qji) * quat_right(dq_hat)).block<3, 3>(1, 1);
  out.J_i.block<3, 3>(3, 12) = (quat_left(Quat(qji * dq_hat))).block<3, 3>(1, 1) *
                               right_jacobian_so3(pre.dq_dbg() * dbg) * pre.dq_dbg();
  out.J_i.block<3, 3>(6, 3) = -hat(RiT * beta);
  out.J_i.block<3, 3>(6, 6) = RiT;
  out.J_i.block<3, 3>(6, 9) = pre.dv_dba();
  out.J_i.block<3, 3>(6, 12) = pre.dv_dbg();
  out.J_i.block<3, 3>(9, 9) = -Mat3::Identity();
  out.J_i.block<3, 3>(12, 12) = -Mat3::Identity();

  // state j
  out.J_j.block<3, 3>(0, 0) = -RiT;
  out.J_j.block<3, 3>(3, 3) = -(quat_right(Quat(qji * dq_hat))).block<3, 3>(1, 1);
  out.J_j.block<3, 3>(6, 6) = -RiT;
  out.J_j.block<3, 3>(9, 9) = Mat3::Identity();
  out.J_j.block<3, 3>(12, 12) = Mat3::Identity();

  if (sqrt_info) {
    out.residual = *sqrt_info * out.residual;
    out.J_i = *sqrt_info * out.J_i;
    out.J_j = *sqrt_info * out.J_j;
  }
  return out;
}

}  // namespace edgevio
