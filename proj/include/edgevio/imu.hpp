// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <span>
#include <vector>

#include "edgevio/so3.hpp"

namespace edgevio {

struct ImuSample {
  double timestamp = 0.0;  // seconds
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2 specific force
};

/// Continuous-time noise densities plus gravity magnitude.
struct ImuNoise {
  double gyro_noise_density = 1.7e-4;   // rad/s/sqrt(Hz)
  double accel_noise_density = 2.0e-3;  // m/s^2/sqrt(Hz)
  double gyro_bias_walk = 1.0e-5;       // rad/s^2/sqrt(Hz)
  double accel_bias_walk = 1.0e-4;      // m/s^3/sqrt(Hz)
  double gravity_magnitude = 9.81;      // m/s^2
};

/// Relative motion between two image timestamps summarized from IMU samples:
/// deltas in the first body frame with gravity excluded, 15x15 covariance in
/// (p, theta, v, ba, bg) order, and first-order bias Jacobians.
struct PreintegratedImu {
  Quat delta_q = Quat::Identity();
  Vec3 delta_v = Vec3::Zero();
  Vec3 delta_p = Vec3::Zero();
  Mat<15, 15> covariance = Mat<15, 15>::Zero();
  Mat<15, 15> jacobian = Mat<15, 15>::Identity();  // d(state)/d(initial error state)
  double dt_total = 0.0;
  Vec3 ref_ba = Vec3::Zero();
  Vec3 ref_bg = Vec3::Zero();
  bool gap_flag = false;  // a sample gap exceeded 5x the nominal period

  Mat3 dp_dba() const { return jacobian.block<3, 3>(0, 9); }
  Mat3 dp_dbg() const { return jacobian.block<3, 3>(0, 12); }
  Mat3 dq_dbg() const { return jacobian.block<3, 3>(3, 12); }
  Mat3 dv_dba() const { return jacobian.block<3, 3>(6, 9); }
  Mat3 dv_dbg() const { return jacobian.block<3, 3>(6, 12); }

  /// First-order correction of the deltas to a bias different from ref.
  Quat corrected_delta_q(const Vec3& bg) const {
    return (delta_q * quat_exp(dq_dbg() * (bg - ref_bg))).normalized();
  }
  Vec3 corrected_delta_v(const Vec3& ba, const Vec3& bg) const {
    return delta_v + dv_dba() * (ba - ref_ba) + dv_dbg() * (bg - ref_bg);
  }
  Vec3 corrected_delta_p(const Vec3& ba, const Vec3& bg) const {
    return delta_p + dp_dba() * (ba - ref_ba) + dp_dbg() * (bg - ref_bg);
  }
};

namespace detail {

// One midpoint step. Measurement order in the 18-dim noise vector:
// (na_k, ng_k, na_k1, ng_k1, nba, nbg).
inline void midpoint_step(PreintegratedImu& s, double dt, const Vec3& w0, const Vec3& a0,
                          const Vec3& w1, const Vec3& a1, const ImuNoise& noise) {
  const Vec3 un_gyr = 0.5 * (w0 + w1) - s.ref_bg;
  const Quat q0 = s.delta_q;
  const Quat q1 = (q0 * quat_exp(un_gyr * dt)).normalized();
  const Mat3 R0 = q0.toRotationMatrix();
  const Mat3 R1 = q1.toRotationMatrix();
  const Vec3 acc0 = a0 - s.ref_ba;
  const Vec3 acc1 = a1 - s.ref_ba;
  const Vec3 un_acc = 0.5 * (R0 * acc0 + R1 * acc1);

  const Mat3 wx = hat(un_gyr);
  const Mat3 a0x = hat(acc0);
  const Mat3 a1x = hat(acc1);
  const double dt2 = dt * dt;

  Mat<15, 15> F = Mat<15, 15>::Identity();
  F.block<3, 3>(0, 3) =
      -0.25 * R0 * a0x * dt2 - 0.25 * R1 * a1x * (Mat3::Identity() - wx * dt) * dt2;
  F.block<3, 3>(0, 6) = Mat3::Identity() * dt;
  F.block<3, 3>(0, 9) = -0.25 * (R0 + R1) * dt2;
  F.block<3, 3>(0, 12) = 0.25 * R1 * a1x * dt2 * dt;
  F.block<3, 3>(3, 3) = Mat3::Identity() - wx * dt;
  F.block<3, 3>(3, 12) = -Mat3::Identity() * dt;
  F.block<3, 3>(6, 3) = -0.5 * R0 * a0x * dt - 0.5 * R1 * a1x * (Mat3::Identity() - wx * dt) * dt;
  F.block<3, 3>(6, 9) = -0.5 * (R0 + R1) * dt;
  F.block<3, 3>(6, 12) = 0.5 * R1 * a1x * dt2;

  Mat<15, 18> V = Mat<15, 18>::Zero();
  V.block<3, 3>(0, 0) = 0.25 * R0 * dt2;
  V.block<3, 3>(0, 3) = -0.125 * R1 * a1x * dt2 * dt;
  V.block<3, 3>(0, 6) = 0.25 * R1 * dt2;
  V.block<3, 3>(0, 9) = V.block<3, 3>(0, 3);
  V.block<3, 3>(3, 3) = 0.5 * Mat3::Identity() * dt;
  V.block<3, 3>(3, 9) = 0.5 * Mat3::Identity() * dt;
  V.block<3, 3>(6, 0) = 0.5 * R0 * dt;
  V.block<3, 3>(6, 3) = -0.25 * R1 * a1x * dt2;
  V.block<3, 3>(6, 6) = 0.5 * R1 * dt;
  V.block<3, 3>(6, 9) = V.block<3, 3>(6, 3);
  V.block<3, 3>(9, 12) = Mat3::Identity() * dt;
  V.block<3, 3>(12, 15) = Mat3::Identity() * dt;

  // continuous densities -> discrete variances (Q_c / dt)
  Eigen::Matrix<double, 18, 1> q;
  const double an2 = sq(noise.accel_noise_density) / dt;
  const double gn2 = sq(noise.gyro_noise_density) / dt;
  const double aw2 = sq(noise.accel_bias_walk) / dt;
  const double gw2 = sq(noise.gyro_bias_walk) / dt;
  q << an2, an2, an2, gn2, gn2, gn2, an2, an2, an2, gn2, gn2, gn2, aw2, aw2, aw2, gw2, gw2, gw2;

  s.delta_p += s.delta_v * dt + 0.5 * un_acc * dt2;
  s.delta_v += un_acc * dt;
  s.delta_q = q1;
  s.jacobian = F * s.jacobian;
  s.covariance = F * s.covariance * F.transpose() + V * q.asDiagonal() * V.transpose();
  s.dt_total += dt;
}

}  // namespace detail

/// Midpoint preintegration of the given samples at the reference bias.
/// Samples must be time-ordered; gravity is excluded (applied in the residual).
inline PreintegratedImu integrate(std::span<const ImuSample> samples, const Vec3& ref_ba,
                                  const Vec3& ref_bg, const ImuNoise& noise) {
  if (samples.size() < 2) throw Error("integrate: need at least 2 samples");
  PreintegratedImu out;
  out.ref_ba = ref_ba;
  out.ref_bg = ref_bg;

  std::vector<double> dts;
  dts.reserve(samples.size() - 1);
  for (size_t i = 1; i < samples.size(); ++i) {
    const double dt = samples[i].timestamp - samples[i - 1].timestamp;
    if (dt < 0.0) throw Error("integrate: non-monotonic IMU timestamps");
    dts.push_back(dt);
  }
  std::vector<double> sorted = dts;
  std::sort(sorted.begin(), sorted.end());
  const double nominal = sorted[sorted.size() / 2];

  for (size_t i = 1; i < samples.size(); ++i) {
    const double dt = dts[i - 1];
    if (dt == 0.0) continue;
    if (nominal > 0.0 && dt > 5.0 * nominal) out.gap_flag = true;
    detail::midpoint_step(out, dt, samples[i - 1].gyro, samples[i - 1].accel, samples[i].gyro,
                          samples[i].accel, noise);
  }
  return out;
}

struct BiasCorrection {
  PreintegratedImu value;
  bool needs_reintegration = false;
};

/// First-order bias update of the deltas. Past the re-linearization threshold
/// the caller is told to re-integrate instead.
inline BiasCorrection correct_for_bias(const PreintegratedImu& pre, const Vec3& new_ba,
                                       const Vec3& new_bg, double relin_threshold = 0.1) {
  BiasCorrection out;
  const double drift =
      std::max((new_ba - pre.ref_ba).norm(), (new_bg - pre.ref_bg).norm());
  if (drift > relin_threshold) {
    out.value = pre;
    out.needs_reintegration = true;
    return out;
  }
  out.value = pre;
  out.value.delta_q = pre.corrected_delta_q(new_bg);
  out.value.delta_v = pre.corrected_delta_v(new_ba, new_bg);
  out.value.delta_p = pre.corrected_delta_p(new_ba, new_bg);
  out.value.ref_ba = new_ba;
  out.value.ref_bg = new_bg;
  return out;
}

}  // namespace edgevio
