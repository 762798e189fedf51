// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <map>
#include <set>

#include "edgevio/marginalization.hpp"
#include "edgevio/tracking.hpp"
#include "edgevio/triangulation.hpp"

namespace edgevio {

struct EstimatorConfig {
  int window_size = 10;               // n_p
  double huber_delta = 1.0;           // on whitened reprojection norms
  double reproj_sigma_px = 1.5;
  double keyframe_parallax_px = 10.0;
  int max_iterations = 10;
  double init_duration = 1.0;         // seconds of static data
  double init_max_gyro = 0.05;        // rad/s
  double init_max_accel_var = 0.1;    // (m/s^2)^2
  double bias_relin_threshold = 0.1;
  TriangulationOptions triangulation;

  void validate() const {
    if (window_size < 2) throw ConfigError("estimator: window_size must be >= 2");
    if (huber_delta <= 0 || reproj_sigma_px <= 0 || keyframe_parallax_px <= 0)
      throw ConfigError("estimator: thresholds must be positive");
    if (max_iterations < 1) throw ConfigError("estimator: max_iterations must be >= 1");
  }
};

struct OptReport {
  double prior_cost0 = 0, prior_cost1 = 0;
  double imu_cost0 = 0, imu_cost1 = 0;
  double vision_cost0 = 0, vision_cost1 = 0;
  double total0 = 0, total1 = 0;
  int iterations = 0;
  bool converged = false;
  bool non_convergence = false;  // damping maxed out without a downhill step
  int num_states = 0, num_landmarks = 0, num_reproj_factors = 0;
};

/// Static-start initial state: gravity-aligned attitude with zero yaw and the
/// gyro bias from the sample mean.
struct StaticInit {
  Quat q0 = Quat::Identity();
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();
};

inline StaticInit initialize_static(std::span<const ImuSample> samples,
                                    const EstimatorConfig& cfg, const ImuNoise& noise) {
  if (samples.size() < 20)
    throw InitializationFailed("initialization: too few IMU samples in the static window");
  Vec3 gyro_mean = Vec3::Zero(), accel_mean = Vec3::Zero();
  for (const auto& s : samples) {
    gyro_mean += s.gyro;
    accel_mean += s.accel;
  }
  gyro_mean /= double(samples.size());
  accel_mean /= double(samples.size());

  double gyro_mag = 0.0;
  Vec3 accel_var = Vec3::Zero();
  for (const auto& s : samples) {
    gyro_mag += s.gyro.norm();
    accel_var += (s.accel - accel_mean).cwiseAbs2();
  }
  gyro_mag /= double(samples.size());
  accel_var /= double(samples.size());
  if (gyro_mag > cfg.init_max_gyro)
    throw InitializationFailed(
        "initialization: gyro activity during the static window; keep the sensor still for the "
        "first second of the sequence");
  if (accel_var.sum() > cfg.init_max_accel_var)
    throw InitializationFailed(
        "initialization: accelerometer variance too high during the static window; keep the "
        "sensor still for the first second of the sequence");

  StaticInit init;
  init.bg = gyro_mean;
  // align measured specific force (= R^T * (0,0,+g)) with +z, then zero the yaw
  const Vec3 a_hat = accel_mean.normalized();
  Mat3 R0 = Quat::FromTwoVectors(a_hat, Vec3::UnitZ()).toRotationMatrix();
  const double yaw = std::atan2(R0(1, 0), R0(0, 0));
  R0 = Eigen::AngleAxisd(-yaw, Vec3::UnitZ()).toRotationMatrix() * R0;
  init.q0 = Quat(R0).normalized();
  (void)noise;
  return init;
}

/// Sliding-window MAP estimator (Eq. 13): marginalization prior + whitened
/// IMU factors + Huber-robustified whitened reprojection factors, solved by
/// damped Gauss-Newton with on-manifold updates and Schur elimination of the
/// inverse depths.
class SlidingWindowEstimator {
 public:
  SlidingWindowEstimator(const EstimatorConfig& cfg, const CameraModel& cam,
                         const ImuNoise& noise)
      : cfg_(cfg), cam_(cam), noise_(noise) {
    cfg_.validate();
    cam_.validate();
    gravity_ = Vec3(0, 0, -noise.gravity_magnitude);
    vision_weight_ = cam_.mean_focal() / cfg_.reproj_sigma_px;
  }

  /// Gate and absorb the static buffer; the next processed frame becomes
  /// window state 0 at the initialized attitude/bias.
  void initialize(std::span<const ImuSample> static_samples) {
    init_ = initialize_static(static_samples, cfg_, noise_);
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }

  struct FrameInput {
    int frame_idx = 0;
    double timestamp = 0.0;
    std::vector<Observation> observations;
    std::vector<ImuSample> samples;  // interval (prev frame, this frame], endpoints included
  };

  OptReport process_frame(const FrameInput& in) {
    if (!initialized_) throw Error("estimator: process_frame before initialization");
    OptReport report;
    if (frames_.empty()) {
      WindowFrame wf;
      wf.state.q = init_.q0;
      wf.state.bg = init_.bg;
      wf.state.ba = init_.ba;
      wf.state.timestamp = in.timestamp;
      wf.state.frame_idx = in.frame_idx;
      frames_.push_back(std::move(wf));
      make_initial_prior();
      attach_observations(in);
      return report;
    }

    append_propagated(in);
    attach_observations(in);
    triangulate_new();
    report = optimize();
    reintegrate_if_needed();
    if (int(frames_.size()) > cfg_.window_size) slide_window();
    return report;
  }

  const ImuState& newest() const { return frames_.back().state; }
  int window_size() const { return int(frames_.size()); }
  const CameraModel& camera() const { return cam_; }
  const MarginalizationPrior& prior() const { return prior_; }
  int num_landmarks() const {
    int n = 0;
    for (const auto& [id, f] : features_) n += f.lambda > 0 ? 1 : 0;
    return n;
  }

  // -- internals exposed for focused tests ---------------------------------

  struct WindowFrame {
    ImuState state;
    PreintegratedImu pre;          // interval from the previous window frame
    Mat<15, 15> sqrt_info = Mat<15, 15>::Identity();
    std::vector<ImuSample> samples;
    bool has_pre = false;
  };

  struct FeatureRecord {
    std::vector<int> frames;       // window frame ids, ascending
    std::vector<Vec3> bearings;
    std::vector<Vec2> uvs;
    double lambda = -1.0;          // inverse depth in the anchor camera; <=0 untriangulated
  };

  std::vector<WindowFrame>& frames() { return frames_; }
  std::map<int64_t, FeatureRecord>& features() { return features_; }

  void append_propagated(const FrameInput& in) {
    WindowFrame wf;
    const ImuState& prev = frames_.back().state;
    wf.pre = integrate(in.samples, prev.ba, prev.bg, noise_);
    wf.sqrt_info = sqrt_information(wf.pre);
    wf.samples = in.samples;
    wf.has_pre = true;
    const double dt = wf.pre.dt_total;
    wf.state.q = (prev.q * wf.pre.delta_q).normalized();
    wf.state.v = prev.v + gravity_ * dt + prev.R() * wf.pre.delta_v;
    wf.state.p = prev.p + prev.v * dt + 0.5 * gravity_ * dt * dt + prev.R() * wf.pre.delta_p;
    wf.state.ba = prev.ba;
    wf.state.bg = prev.bg;
    wf.state.timestamp = in.timestamp;
    wf.state.frame_idx = in.frame_idx;
    frames_.push_back(std::move(wf));
  }

  void attach_observations(const FrameInput& in) {
    for (const auto& ob : in.observations) {
      auto& rec = features_[ob.id];
      rec.frames.push_back(in.frame_idx);
      rec.bearings.push_back(cam_.unit_bearing(ob.uv));
      rec.uvs.push_back(ob.uv);
    }
  }

  void triangulate_new() {
    for (auto& [id, rec] : features_) {
      if (rec.lambda > 0 || rec.frames.size() < 2) continue;
      const ImuState* anchor = state_of(rec.frames[0]);
      if (!anchor) continue;
      std::vector<TriangulationView> views;
      for (size_t k = 1; k < rec.frames.size(); ++k) {
        const ImuState* sk = state_of(rec.frames[k]);
        if (!sk) continue;
        auto [R, t] = relative_camera_transform(*anchor, *sk, cam_);
        views.push_back({R, t, rec.bearings[k]});
      }
      if (views.empty()) continue;
      if (const auto lam = triangulate(rec.bearings[0], views, cfg_.triangulation))
        rec.lambda = *lam;
    }
  }

  OptReport optimize();
  void slide_window();

 private:
  const ImuState* state_of(int frame_idx) const {
    for (const auto& f : frames_)
      if (f.state.frame_idx == frame_idx) return &f.state;
    return nullptr;
  }
  int window_index(int frame_idx) const {
    for (size_t i = 0; i < frames_.size(); ++i)
      if (frames_[i].state.frame_idx == frame_idx) return int(i);
    return -1;
  }

  void make_initial_prior() {
    // hard gauge pin on pose, soft on velocity and biases
    prior_.frame_ids = {frames_[0].state.frame_idx};
    prior_.linearization = {frames_[0].state};
    VecX w(15);
    w << 1e4, 1e4, 1e4, 1e4, 1e4, 1e4, 1e2, 1e2, 1e2, 10, 10, 10, 1e2, 1e2, 1e2;
    prior_.J = MatX(w.asDiagonal());
    prior_.r0 = VecX::Zero(15);
  }

  void reintegrate_if_needed() {
    for (size_t i = 1; i < frames_.size(); ++i) {
      auto& wf = frames_[i];
      const ImuState& prev = frames_[i - 1].state;
      if ((prev.ba - wf.pre.ref_ba).norm() > cfg_.bias_relin_threshold ||
          (prev.bg - wf.pre.ref_bg).norm() > cfg_.bias_relin_threshold) {
        wf.pre = integrate(wf.samples, prev.ba, prev.bg, noise_);
        wf.sqrt_info = sqrt_information(wf.pre);
      }
    }
  }

  void marginalize_oldest();
  void discard_second_newest();
  double parallax_second_newest() const;

  struct Problem;  // assembled factor lists, defined in the implementation

  EstimatorConfig cfg_;
  CameraModel cam_;
  ImuNoise noise_;
  Vec3 gravity_ = Vec3(0, 0, -9.81);
  double vision_weight_ = 1.0;
  bool initialized_ = false;
  StaticInit init_;
  std::vector<WindowFrame> frames_;
  std::map<int64_t, FeatureRecord> features_;
  MarginalizationPrior prior_;
};

// ---------------------------------------------------------------------------
// implementation
// ---------------------------------------------------------------------------

struct SlidingWindowEstimator::Problem {
  struct Reproj {
    int si, sj;       // window indices
    int64_t feature;
    Vec3 bearing_i, bearing_j;
  };
  std::vector<Reproj> reproj;
  std::vector<int64_t> lambda_ids;         // order of landmark columns
  std::map<int64_t, int> lambda_col;
  std::vector<int> prior_slots;            // window index per prior frame
};

inline OptReport SlidingWindowEstimator::optimize() {
  OptReport rep;
  rep.num_states = int(frames_.size());

  Problem prob;
  for (auto& [id, rec] : features_) {
    if (rec.lambda <= 0 || rec.frames.size() < 2) continue;
    const int si = window_index(rec.frames[0]);
    if (si < 0) continue;
    bool used = false;
    for (size_t k = 1; k < rec.frames.size(); ++k) {
      const int sj = window_index(rec.frames[k]);
      if (sj < 0) continue;
      prob.reproj.push_back({si, sj, id, rec.bearings[0], rec.bearings[k]});
      used = true;
    }
    if (used && !prob.lambda_col.count(id)) {
      prob.lambda_col[id] = int(prob.lambda_ids.size());
      prob.lambda_ids.push_back(id);
    }
  }
  for (int fid : prior_.frame_ids) prob.prior_slots.push_back(window_index(fid));
  rep.num_landmarks = int(prob.lambda_ids.size());
  rep.num_reproj_factors = int(prob.reproj.size());

  const int S = int(frames_.size());
  const int P = 15 * S;
  const int F = int(prob.lambda_ids.size());

  std::vector<ImuState> X(S);
  for (int i = 0; i < S; ++i) X[i] = frames_[i].state;
  std::map<int64_t, double> L;
  for (int64_t id : prob.lambda_ids) L[id] = features_[id].lambda;

  const double hd = cfg_.huber_delta;
  auto eval_cost = [&](const std::vector<ImuState>& xs, const std::map<int64_t, double>& ls,
                       double* c_prior, double* c_imu, double* c_vis) {
    double cp = 0, ci = 0, cv = 0;
    if (!prior_.empty()) {
      std::vector<const ImuState*> cur;
      for (int slot : prob.prior_slots) cur.push_back(&xs[slot]);
      const VecX r = prior_.r0 + prior_.J * prior_.delta(cur);
      cp = r.squaredNorm();
    }
    for (int i = 1; i < S; ++i) {
      const auto res =
          imu_residual(xs[i - 1], xs[i], frames_[i].pre, gravity_, &frames_[i].sqrt_info);
      ci += res.residual.squaredNorm();
    }
    for (const auto& f : prob.reproj) {
      const auto res = reprojection_residual(xs[f.si], xs[f.sj], ls.at(f.feature), f.bearing_i,
                                             f.bearing_j, cam_, vision_weight_);
      if (!res.valid) continue;
      const double s = res.residual.squaredNorm();
      cv += s <= hd * hd ? s : 2 * hd * std::sqrt(s) - hd * hd;
    }
    if (c_prior) *c_prior = cp;
    if (c_imu) *c_imu = ci;
    if (c_vis) *c_vis = cv;
    return cp + ci + cv;
  };

  double cost = eval_cost(X, L, &rep.prior_cost0, &rep.imu_cost0, &rep.vision_cost0);
  rep.total0 = cost;

  MatX Hpp(P, P), Hpf(P, std::max(F, 1));
  VecX hff(std::max(F, 1)), bp(P), bf(std::max(F, 1));

  double mu = -1.0;
  bool done = false;
  for (int iter = 0; iter < cfg_.max_iterations && !done; ++iter) {
    Hpp.setZero();
    Hpf.setZero();
    hff.setZero();
    bp.setZero();
    bf.setZero();

    if (!prior_.empty()) {
      std::vector<const ImuState*> cur;
      for (int slot : prob.prior_slots) cur.push_back(&X[slot]);
      const VecX r = prior_.r0 + prior_.J * prior_.delta(cur);
      for (size_t a = 0; a < prob.prior_slots.size(); ++a) {
        const auto Ja = prior_.J.middleCols(15 * int(a), 15);
        bp.segment<15>(15 * prob.prior_slots[a]) -= Ja.transpose() * r;
        for (size_t b = 0; b < prob.prior_slots.size(); ++b)
          Hpp.block<15, 15>(15 * prob.prior_slots[a], 15 * prob.prior_slots[b]) +=
              Ja.transpose() * prior_.J.middleCols(15 * int(b), 15);
      }
    }
    for (int i = 1; i < S; ++i) {
      const auto res =
          imu_residual(X[i - 1], X[i], frames_[i].pre, gravity_, &frames_[i].sqrt_info);
      const int a = 15 * (i - 1), b = 15 * i;
      Hpp.block<15, 15>(a, a) += res.J_i.transpose() * res.J_i;
      Hpp.block<15, 15>(a, b) += res.J_i.transpose() * res.J_j;
      Hpp.block<15, 15>(b, a) += res.J_j.transpose() * res.J_i;
      Hpp.block<15, 15>(b, b) += res.J_j.transpose() * res.J_j;
      bp.segment<15>(a) -= res.J_i.transpose() * res.residual;
      bp.segment<15>(b) -= res.J_j.transpose() * res.residual;
    }
    for (const auto& f : prob.reproj) {
      auto res = reprojection_residual(X[f.si], X[f.sj], L.at(f.feature), f.bearing_i,
                                       f.bearing_j, cam_, vision_weight_);
      if (!res.valid) continue;
      const double s = res.residual.squaredNorm();
      if (s > hd * hd) {
        const double w = std::sqrt(hd / std::sqrt(s));
        res.residual *= w;
        res.J_pose_i *= w;
        res.J_pose_j *= w;
        res.J_lambda *= w;
      }
      const int a = 15 * f.si, b = 15 * f.sj, c = prob.lambda_col.at(f.feature);
      Hpp.block<6, 6>(a, a) += res.J_pose_i.transpose() * res.J_pose_i;
      Hpp.block<6, 6>(a, b) += res.J_pose_i.transpose() * res.J_pose_j;
      Hpp.block<6, 6>(b, a) += res.J_pose_j.transpose() * res.J_pose_i;
      Hpp.block<6, 6>(b, b) += res.J_pose_j.transpose() * res.J_pose_j;
      Hpf.block<6, 1>(a, c) += res.J_pose_i.transpose() * res.J_lambda;
      Hpf.block<6, 1>(b, c) += res.J_pose_j.transpose() * res.J_lambda;
      hff(c) += res.J_lambda.squaredNorm();
      bp.segment<6>(a) -= res.J_pose_i.transpose() * res.residual;
      bp.segment<6>(b) -= res.J_pose_j.transpose() * res.residual;
      bf(c) -= res.J_lambda.dot(res.residual);
    }

    if (mu < 0) mu = 1e-6 * std::max(1.0, Hpp.diagonal().maxCoeff());

    bool accepted = false;
    for (int trial = 0; trial < 12; ++trial) {
      // damped Schur solve: eliminate the inverse depths first
      VecX hff_d = hff.array() + mu * hff.array().max(1e-12);
      MatX S_red = Hpp;
      S_red.diagonal() += mu * Hpp.diagonal().cwiseMax(1e-12);
      VecX b_red = bp;
      if (F > 0) {
        const VecX inv = hff_d.cwiseInverse();
        S_red.noalias() -= Hpf * inv.asDiagonal() * Hpf.transpose();
        b_red.noalias() -= Hpf * inv.asDiagonal() * bf;
      }
      const VecX dp = Eigen::LDLT<MatX>(S_red).solve(b_red);
      VecX df = VecX::Zero(std::max(F, 1));
      if (F > 0) df = hff_d.cwiseInverse().asDiagonal() * (bf - Hpf.transpose() * dp);

      std::vector<ImuState> Xt(S);
      for (int i = 0; i < S; ++i) Xt[i] = boxplus(X[i], dp.segment<15>(15 * i));
      std::map<int64_t, double> Lt = L;
      for (int c = 0; c < F; ++c) {
        double& lam = Lt[prob.lambda_ids[c]];
        lam = std::max(lam + df(c), 1e-6);
      }
      const double new_cost = eval_cost(Xt, Lt, nullptr, nullptr, nullptr);
      if (new_cost < cost) {
        const double decrease = cost - new_cost;
        X = std::move(Xt);
        L = std::move(Lt);
        cost = new_cost;
        mu = std::max(mu / 3.0, 1e-12);
        accepted = true;
        ++rep.iterations;
        const double step_norm = std::sqrt(dp.squaredNorm() + (F > 0 ? df.squaredNorm() : 0.0));
        if (decrease < 1e-6 * std::max(cost, 1e-300) || step_norm < 1e-8) {
          rep.converged = true;
          done = true;
        }
        break;
      }
      mu *= 4.0;
      if (mu > 1e10) {
        rep.non_convergence = true;
        done = true;
        break;
      }
    }
    if (!accepted && !rep.non_convergence) {
      rep.converged = true;  // no downhill step at moderate damping: at a minimum
      done = true;
    }
  }

  for (int i = 0; i < S; ++i) frames_[i].state = X[i];
  for (const auto& [id, lam] : L) features_[id].lambda = lam;
  rep.total1 = eval_cost(X, L, &rep.prior_cost1, &rep.imu_cost1, &rep.vision_cost1);
  return rep;
}

inline double SlidingWindowEstimator::parallax_second_newest() const {
  const int fa = frames_[frames_.size() - 2].state.frame_idx;
  const int fb = frames_.back().state.frame_idx;
  double sum = 0.0;
  int n = 0;
  for (const auto& [id, rec] : features_) {
    int ia = -1, ib = -1;
    for (size_t k = 0; k < rec.frames.size(); ++k) {
      if (rec.frames[k] == fa) ia = int(k);
      if (rec.frames[k] == fb) ib = int(k);
    }
    if (ia >= 0 && ib >= 0) {
      sum += (rec.uvs[ib] - rec.uvs[ia]).norm();
      ++n;
    }
  }
  return n > 0 ? sum / n : std::numeric_limits<double>::infinity();
}

inline void SlidingWindowEstimator::slide_window() {
  if (parallax_second_newest() >= cfg_.keyframe_parallax_px)
    marginalize_oldest();
  else
    discard_second_newest();
}

inline void SlidingWindowEstimator::marginalize_oldest() {
  const int f0 = frames_[0].state.frame_idx;

  // variables: involved window frames + inverse depths anchored at frame 0
  std::set<int> involved_frames(prior_.frame_ids.begin(), prior_.frame_ids.end());
  involved_frames.insert(f0);
  involved_frames.insert(frames_[1].state.frame_idx);
  std::vector<int64_t> anchored;
  for (const auto& [id, rec] : features_) {
    if (rec.frames.empty() || rec.frames[0] != f0 || rec.lambda <= 0) continue;
    bool any = false;
    for (size_t k = 1; k < rec.frames.size(); ++k)
      if (window_index(rec.frames[k]) >= 0) {
        involved_frames.insert(rec.frames[k]);
        any = true;
      }
    if (any) anchored.push_back(id);
  }

  std::vector<int> frame_list(involved_frames.begin(), involved_frames.end());
  std::map<int, int> col_of;  // frame id -> column offset
  for (size_t i = 0; i < frame_list.size(); ++i) col_of[frame_list[i]] = 15 * int(i);
  const int PF = 15 * int(frame_list.size());
  std::map<int64_t, int> lam_col;
  for (size_t i = 0; i < anchored.size(); ++i) lam_col[anchored[i]] = PF + int(i);
  const int N = PF + int(anchored.size());

  MatX H = MatX::Zero(N, N);
  VecX g = VecX::Zero(N);  // gradient J^T r

  // prior factor
  if (!prior_.empty()) {
    std::vector<const ImuState*> cur;
    for (int fid : prior_.frame_ids) cur.push_back(state_of(fid));
    const VecX r = prior_.r0 + prior_.J * prior_.delta(cur);
    for (size_t a = 0; a < prior_.frame_ids.size(); ++a) {
      const auto Ja = prior_.J.middleCols(15 * int(a), 15);
      const int ca = col_of.at(prior_.frame_ids[a]);
      g.segment<15>(ca) += Ja.transpose() * r;
      for (size_t b = 0; b < prior_.frame_ids.size(); ++b)
        H.block<15, 15>(ca, col_of.at(prior_.frame_ids[b])) +=
            Ja.transpose() * prior_.J.middleCols(15 * int(b), 15);
    }
  }
  // IMU factor 0 -> 1
  {
    const auto res = imu_residual(frames_[0].state, frames_[1].state, frames_[1].pre, gravity_,
                                  &frames_[1].sqrt_info);
    const int a = col_of.at(f0), b = col_of.at(frames_[1].state.frame_idx);
    H.block<15, 15>(a, a) += res.J_i.transpose() * res.J_i;
    H.block<15, 15>(a, b) += res.J_i.transpose() * res.J_j;
    H.block<15, 15>(b, a) += res.J_j.transpose() * res.J_i;
    H.block<15, 15>(b, b) += res.J_j.transpose() * res.J_j;
    g.segment<15>(a) += res.J_i.transpose() * res.residual;
    g.segment<15>(b) += res.J_j.transpose() * res.residual;
  }
  // reprojection factors anchored at frame 0
  const double hd = cfg_.huber_delta;
  for (int64_t id : anchored) {
    const auto& rec = features_.at(id);
    for (size_t k = 1; k < rec.frames.size(); ++k) {
      const int wj = window_index(rec.frames[k]);
      if (wj < 0) continue;
      auto res = reprojection_residual(frames_[0].state, frames_[wj].state, rec.lambda,
                                       rec.bearings[0], rec.bearings[k], cam_, vision_weight_);
      if (!res.valid) continue;
      const double s = res.residual.squaredNorm();
      if (s > hd * hd) {
        const double w = std::sqrt(hd / std::sqrt(s));
        res.residual *= w;
        res.J_pose_i *= w;
        res.J_pose_j *= w;
        res.J_lambda *= w;
      }
      const int a = col_of.at(f0), b = col_of.at(rec.frames[k]), c = lam_col.at(id);
      Mat<2, 6> Ji = res.J_pose_i, Jj = res.J_pose_j;
      H.block<6, 6>(a, a) += Ji.transpose() * Ji;
      H.block<6, 6>(a, b) += Ji.transpose() * Jj;
      H.block<6, 6>(b, a) += Jj.transpose() * Ji;
      H.block<6, 6>(b, b) += Jj.transpose() * Jj;
      H.block<6, 1>(a, c) += Ji.transpose() * res.J_lambda;
      H.block<6, 1>(b, c) += Jj.transpose() * res.J_lambda;
      H.block<1, 6>(c, a) += res.J_lambda.transpose() * Ji;
      H.block<1, 6>(c, b) += res.J_lambda.transpose() * Jj;
      H(c, c) += res.J_lambda.squaredNorm();
      g.segment<6>(a) += Ji.transpose() * res.residual;
      g.segment<6>(b) += Jj.transpose() * res.residual;
      g(c) += res.J_lambda.dot(res.residual);
    }
  }

  // Schur: eliminate frame 0 and the anchored inverse depths
  std::vector<int> marg_idx, keep_idx;
  for (int d = 0; d < 15; ++d) marg_idx.push_back(col_of.at(f0) + d);
  for (size_t i = 0; i < anchored.size(); ++i) marg_idx.push_back(PF + int(i));
  std::vector<int> kept_frames;
  for (int fid : frame_list)
    if (fid != f0) {
      kept_frames.push_back(fid);
      for (int d = 0; d < 15; ++d) keep_idx.push_back(col_of.at(fid) + d);
    }
  const SchurResult schur = marginalize_gaussian(H, g, marg_idx, keep_idx);

  MarginalizationPrior next;
  next.frame_ids = kept_frames;
  for (int fid : kept_frames) next.linearization.push_back(*state_of(fid));
  quadratic_to_sqrt_form(schur.H, schur.g, &next.J, &next.r0);
  prior_ = std::move(next);

  // feature bookkeeping: drop frame-0 observations, re-anchor survivors
  for (auto it = features_.begin(); it != features_.end();) {
    auto& rec = it->second;
    if (!rec.frames.empty() && rec.frames[0] == f0) {
      const double old_lambda = rec.lambda;
      const Vec3 old_bearing = rec.bearings[0];
      const ImuState* old_anchor = state_of(f0);
      rec.frames.erase(rec.frames.begin());
      rec.bearings.erase(rec.bearings.begin());
      rec.uvs.erase(rec.uvs.begin());
      rec.lambda = -1.0;
      if (!rec.frames.empty() && old_lambda > 0) {
        if (const ImuState* na = state_of(rec.frames[0]); na && old_anchor) {
          auto [R, t] = relative_camera_transform(*old_anchor, *na, cam_);
          const Vec3 X_new = R * (old_bearing / old_lambda) + t;
          if (X_new.z() > 0 && X_new.norm() > cfg_.triangulation.min_depth)
            rec.lambda = 1.0 / X_new.norm();
        }
      }
    }
    if (rec.frames.empty()) it = features_.erase(it);
    else ++it;
  }
  frames_.erase(frames_.begin());
  frames_[0].has_pre = false;  // its preintegration chained into the prior
}

inline void SlidingWindowEstimator::discard_second_newest() {
  const int idx = int(frames_.size()) - 2;
  const int fid = frames_[idx].state.frame_idx;

  // if the prior references the discarded frame, marginalize it out of the prior
  if (!prior_.empty()) {
    auto hit = std::find(prior_.frame_ids.begin(), prior_.frame_ids.end(), fid);
    if (hit != prior_.frame_ids.end()) {
      const int slot = int(hit - prior_.frame_ids.begin());
      std::vector<const ImuState*> cur;
      for (int f : prior_.frame_ids) cur.push_back(state_of(f));
      const VecX r = prior_.r0 + prior_.J * prior_.delta(cur);
      const MatX H = prior_.J.transpose() * prior_.J;
      const VecX g = prior_.J.transpose() * r;
      std::vector<int> marg_idx, keep_idx;
      for (int d = 0; d < 15; ++d) marg_idx.push_back(15 * slot + d);
      MarginalizationPrior next;
      for (size_t i = 0; i < prior_.frame_ids.size(); ++i) {
        if (int(i) == slot) continue;
        next.frame_ids.push_back(prior_.frame_ids[i]);
        next.linearization.push_back(*state_of(prior_.frame_ids[i]));
        for (int d = 0; d < 15; ++d) keep_idx.push_back(15 * int(i) + d);
      }
      const SchurResult schur = marginalize_gaussian(H, g, marg_idx, keep_idx);
      quadratic_to_sqrt_form(schur.H, schur.g, &next.J, &next.r0);
      prior_ = std::move(next);
    }
  }

  // merge the IMU chain across the discarded frame
  auto& next_frame = frames_[idx + 1];
  std::vector<ImuSample> merged = frames_[idx].samples;
  if (!merged.empty() && !next_frame.samples.empty())
    merged.insert(merged.end(), next_frame.samples.begin() + 1, next_frame.samples.end());
  else
    merged = next_frame.samples;
  const ImuState& prev = frames_[idx - 1].state;
  next_frame.samples = std::move(merged);
  next_frame.pre = integrate(next_frame.samples, prev.ba, prev.bg, noise_);
  next_frame.sqrt_info = sqrt_information(next_frame.pre);

  // drop this frame's observations; re-triangulation recovers young features
  for (auto it = features_.begin(); it != features_.end();) {
    auto& rec = it->second;
    for (size_t k = 0; k < rec.frames.size(); ++k) {
      if (rec.frames[k] != fid) continue;
      if (k == 0) rec.lambda = -1.0;  // anchor removed
      rec.frames.erase(rec.frames.begin() + k);
      rec.bearings.erase(rec.bearings.begin() + k);
      rec.uvs.erase(rec.uvs.begin() + k);
      break;
    }
    if (rec.frames.empty()) it = features_.erase(it);
    else ++it;
  }
  frames_.erase(frames_.begin() + idx);
}

}  // namespace edgevio
