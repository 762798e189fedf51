// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>

#include "edgevio/camera.hpp"
#include "edgevio/imu.hpp"
#include "edgevio/klt.hpp"

namespace edgevio {

enum class TrackerChoice { DT_KLT, KLT };

inline const char* to_string(TrackerChoice c) { return c == TrackerChoice::DT_KLT ? "DT_KLT" : "KLT"; }

/// Distance-field stability metric (Eq. 7): s_df = alpha*d_edge + beta*d_angle.
struct StabilityMetric {
  double d_edge = 0.0;   // normalized edge-count difference, dimensionless
  double d_angle = 0.0;  // inter-frame rotation angle, radians
  double alpha = 1.0;
  double beta = 2.0;
  double s_df = 0.0;
  double s_th = 0.25;
};

inline StabilityMetric make_stability_metric(double d_edge, double d_angle, double alpha,
                                             double beta, double s_th) {
  StabilityMetric m;
  m.d_edge = d_edge;
  m.d_angle = d_angle;
  m.alpha = alpha;
  m.beta = beta;
  m.s_th = s_th;
  m.s_df = alpha * d_edge + beta * d_angle;
  return m;
}

/// Normalized difference in edge-point counts (Eq. 8).
inline double compute_d_edge(const EdgeImage& cur, const EdgeImage& ref) {
  if (ref.count() == 0) throw EmptyEdgeImageError("compute_d_edge: reference has no edge points");
  return std::abs(double(cur.count()) - double(ref.count())) / double(ref.count());
}

/// Adaptive switching policy: DT-KLT while the distance field is stable.
inline TrackerChoice select_tracker(const StabilityMetric& m) {
  return m.s_df < m.s_th ? TrackerChoice::DT_KLT : TrackerChoice::KLT;
}

struct Feature {
  int64_t id = -1;
  Vec2 pos = Vec2::Zero();  // current sub-pixel position, full resolution
  int first_frame = 0;
  int track_len = 1;
  TrackerChoice provenance = TrackerChoice::DT_KLT;  // tracker of the latest hop
};

/// Greedy detection of new features on edge points, strongest DoG plane
/// gradient first, enforcing min_spacing against existing and selected
/// features until min_features total are live.
struct DetectionResult {
  std::vector<Vec2> positions;
  bool low_texture = false;  // could not reach min_features
};

inline DetectionResult detect_new_features(const EdgeImage& edges,
                                           std::span<const Feature> existing,
                                           const TrackerConfig& cfg) {
  DetectionResult out;
  const int want = cfg.min_features - int(existing.size());
  if (want <= 0) return out;

  // spacing grid over cells of min_spacing
  const double cell = cfg.min_spacing;
  const int gw = int(edges.width / cell) + 2, gh = int(edges.height / cell) + 2;
  std::vector<std::vector<Vec2>> grid(size_t(gw) * gh);
  auto cell_of = [&](const Vec2& p) {
    return std::pair{std::clamp(int(p.x() / cell), 0, gw - 1),
                     std::clamp(int(p.y() / cell), 0, gh - 1)};
  };
  auto too_close = [&](const Vec2& p) {
    auto [cx, cy] = cell_of(p);
    for (int j = std::max(0, cy - 1); j <= std::min(gh - 1, cy + 1); ++j)
      for (int i = std::max(0, cx - 1); i <= std::min(gw - 1, cx + 1); ++i)
        for (const Vec2& q : grid[size_t(j) * gw + i])
          if ((p - q).norm() < cfg.min_spacing) return true;
    return false;
  };
  auto insert = [&](const Vec2& p) {
    auto [cx, cy] = cell_of(p);
    grid[size_t(cy) * gw + cx].push_back(p);
  };
  for (const auto& f : existing) insert(f.pos);

  std::vector<int> order(edges.points.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = int(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return edges.points[a].plane.grad_mag() > edges.points[b].plane.grad_mag();
  });

  const double margin = cfg.window_half_x + 2.0;
  for (int idx : order) {
    if (int(out.positions.size()) >= want) break;
    const Vec2& p = edges.points[idx].uv;
    if (p.x() < margin || p.y() < margin || p.x() > edges.width - 1 - margin ||
        p.y() > edges.height - 1 - margin)
      continue;
    if (too_close(p)) continue;
    insert(p);
    out.positions.push_back(p);
  }
  out.low_texture = int(out.positions.size()) < want;
  return out;
}

struct OutlierResult {
  std::vector<uint8_t> inlier;  // one flag per input pair
  bool pass_through = false;    // fewer than 8 pairs: geometric test skipped
};

namespace detail {

inline Eigen::Matrix3d fundamental_from_8(const std::vector<Vec2>& a, const std::vector<Vec2>& b,
                                          const std::vector<int>& idx) {
  Eigen::Matrix<double, 8, 9> A;
  for (int r = 0; r < 8; ++r) {
    const Vec2& x1 = a[idx[r]];
    const Vec2& x2 = b[idx[r]];
    A.row(r) << x2.x() * x1.x(), x2.x() * x1.y(), x2.x(), x2.y() * x1.x(), x2.y() * x1.y(),
        x2.y(), x1.x(), x1.y(), 1.0;
  }
  const Eigen::JacobiSVD<Eigen::Matrix<double, 8, 9>> svd(A, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> f = svd.matrixV().col(8);
  Eigen::Matrix3d F;
  F << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);
  // rank-2 projection
  Eigen::JacobiSVD<Eigen::Matrix3d> svd2(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = svd2.singularValues();
  s(2) = 0.0;
  return svd2.matrixU() * s.asDiagonal() * svd2.matrixV().transpose();
}

inline double sampson_sq(const Eigen::Matrix3d& F, const Vec2& x1, const Vec2& x2) {
  const Vec3 p1(x1.x(), x1.y(), 1.0), p2(x2.x(), x2.y(), 1.0);
  const Vec3 Fp1 = F * p1;
  const Vec3 Ftp2 = F.transpose() * p2;
  const double e = p2.dot(Fp1);
  const double denom = Fp1.head<2>().squaredNorm() + Ftp2.head<2>().squaredNorm();
  if (denom < 1e-30) return 1e30;
  return e * e / denom;
}

}  // namespace detail

/// RANSAC fundamental-matrix verification on undistorted normalized
/// coordinates. The epipolar threshold is ransac_thresh_px at full image
/// resolution. Fewer than 8 pairs pass through with a warning flag.
inline OutlierResult reject_outliers(std::span<const std::pair<Vec2, Vec2>> matches,
                                     const CameraModel& cam, double thresh_px, uint64_t seed) {
  OutlierResult out;
  out.inlier.assign(matches.size(), 1);
  if (matches.size() < 8) {
    out.pass_through = true;
    return out;
  }
  std::vector<Vec2> a(matches.size()), b(matches.size());
  for (size_t i = 0; i < matches.size(); ++i) {
    const Vec3 ba = cam.unit_bearing(matches[i].first);
    const Vec3 bb = cam.unit_bearing(matches[i].second);
    a[i] = ba.head<2>() / ba.z();
    b[i] = bb.head<2>() / bb.z();
  }
  const double thresh_sq = sq(thresh_px / cam.mean_focal());

  Rng rng(seed);
  const int n = int(matches.size());
  std::vector<int> sample(8);
  std::vector<uint8_t> best_mask(matches.size(), 1);
  int best_count = -1;
  int max_iters = 200;
  for (int it = 0; it < max_iters; ++it) {
    for (int k = 0; k < 8; ++k) {
      int pick;
      bool dup;
      do {
        pick = rng.uniform_int(0, n - 1);
        dup = false;
        for (int m = 0; m < k; ++m) dup |= sample[m] == pick;
      } while (dup);
      sample[k] = pick;
    }
    const Eigen::Matrix3d F = detail::fundamental_from_8(a, b, sample);
    int count = 0;
    std::vector<uint8_t> mask(matches.size());
    for (size_t i = 0; i < matches.size(); ++i) {
      mask[i] = detail::sampson_sq(F, a[i], b[i]) < thresh_sq ? 1 : 0;
      count += mask[i];
    }
    if (count > best_count) {
      best_count = count;
      best_mask = mask;
      // adaptive iteration bound at 0.99 confidence
      const double w = double(count) / n;
      const double denom = std::log(std::max(1e-12, 1.0 - std::pow(w, 8)));
      if (denom < 0.0)
        max_iters = std::min(max_iters, it + 1 + int(std::log(0.01) / denom) + 1);
    }
  }
  out.inlier = best_mask;
  return out;
}

/// Per-frame data the tracking stage consumes; immutable once built.
struct FrameData {
  int frame_idx = 0;
  double timestamp = 0.0;
  RawImage gray8;           // radiometrically rescaled intensity image
  EdgeImage edges;
  FieldPyramid fields;
  TrackPyramid dt_pyr;      // prepared distance pyramid (clamped values + gradients)
  TrackPyramid intensity_pyr;
};

/// Builds the per-frame tracking inputs from a raw image. An image with no
/// extractable edges yields empty fields (FrameData.empty_edges set).
struct PreprocessParams {
  double sigma = 1.0;
  double k = 1.6;
  double grad_threshold = 6.0;
  double rescale_lo = 0.01;
  double rescale_hi = 0.99;
  int pyramid_levels = 4;
  double distance_cap = 20.0;
};

inline FrameData preprocess_frame(const RawImage& raw, const PreprocessParams& p, int frame_idx) {
  FrameData fd;
  fd.frame_idx = frame_idx;
  fd.timestamp = raw.timestamp;
  fd.gray8 = rescale_radiometric(raw, p.rescale_lo, p.rescale_hi);
  fd.edges = extract_edges(dog_filter(fd.gray8, p.sigma, p.k), p.grad_threshold, raw.timestamp);
  fd.intensity_pyr = prepare_tracking(build_image_pyramid(to_float(fd.gray8), p.pyramid_levels));
  if (fd.edges.count() > 0) {
    fd.fields = build_pyramid(fd.edges, p.pyramid_levels);
    fd.dt_pyr = prepare_tracking(fd.fields, p.distance_cap);
  }
  return fd;
}

struct Observation {
  int64_t id = -1;
  Vec2 uv = Vec2::Zero();
  int track_len = 1;
  TrackerChoice tracker = TrackerChoice::DT_KLT;
};

/// One line of the per-frame diagnostics stream.
struct TrackDiagnostics {
  int frame_idx = 0;
  TrackerChoice choice = TrackerChoice::DT_KLT;
  double s_df = 0.0, d_edge = 0.0, d_angle = 0.0;
  int n_tracked = 0, n_lost = 0, n_new = 0;
  bool skipped = false;       // empty edge image on the current frame
  bool low_texture = false;
  int losses[5] = {0, 0, 0, 0, 0};  // indexed by LossReason minus one
};

inline std::string diagnostics_line(const TrackDiagnostics& d) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%d, %s, %.6f, %.6f, %.6f, %d, %d, %d", d.frame_idx,
                to_string(d.choice), d.s_df, d.d_edge, d.d_angle, d.n_tracked, d.n_lost, d.n_new);
  return buf;
}

/// The adaptive tracking front end (ADT-KLT). Owns all mutable feature state;
/// exactly one thread may call step().
class Frontend {
 public:
  Frontend(const TrackerConfig& cfg, const CameraModel& cam) : cfg_(cfg), cam_(cam) {
    cfg_.validate();
  }

  struct StepResult {
    std::vector<Observation> observations;
    TrackDiagnostics diag;
  };

  /// Track features from the previous frame into `cur`, choose the tracker by
  /// the stability metric, verify geometry, top up detections. `gyro_pre` is
  /// the gyro preintegration between the two frames (may be null for the
  /// first frame); `forced` pins the tracker choice for ablation runs.
  StepResult step(std::shared_ptr<const FrameData> cur, const PreintegratedImu* gyro_pre,
                  std::optional<TrackerChoice> forced, uint64_t seed) {
    StepResult res;
    res.diag.frame_idx = cur->frame_idx;

    const bool cur_empty = cur->edges.count() == 0;
    Mat3 R_cc = Mat3::Identity();  // prev camera -> cur camera rotation
    if (gyro_pre) {
      const Mat3 R_bc = cam_.R_bc();
      R_cc = R_bc.transpose() * gyro_pre->delta_q.toRotationMatrix().transpose() * R_bc;
      res.diag.d_angle = rotation_angle(gyro_pre->delta_q);
    }

    if (!prev_ || cur_empty) {
      // nothing to track: either the first frame or an empty current frame.
      if (prev_ && cur_empty) {
        res.diag.skipped = true;
        carry_predicted(R_cc);
        prev_ = cur;  // keep the freshest timestamp for the next prediction
        prev_has_edges_ = false;
        return res;
      }
      detect_into(*cur, res);
      prev_ = cur;
      prev_has_edges_ = !cur_empty;
      return res;
    }

    // stability metric against the previous tracked frame (Eq. 7-9)
    if (prev_has_edges_) res.diag.d_edge = compute_d_edge(cur->edges, prev_->edges);
    else res.diag.d_edge = 1.0;  // reference had no edges: field is untrusted
    const StabilityMetric metric =
        make_stability_metric(res.diag.d_edge, res.diag.d_angle, cfg_.alpha, cfg_.beta, cfg_.s_th);
    res.diag.s_df = metric.s_df;
    TrackerChoice choice = forced ? *forced : select_tracker(metric);
    if (choice == TrackerChoice::DT_KLT && !prev_has_edges_) choice = TrackerChoice::KLT;
    res.diag.choice = choice;

    // gyro-predicted initial displacements
    std::vector<Vec2> positions(features_.size()), inits(features_.size(), Vec2::Zero());
    for (size_t i = 0; i < features_.size(); ++i) {
      positions[i] = features_[i].pos;
      if (gyro_pre) {
        const Vec3 bearing = R_cc * cam_.unit_bearing(features_[i].pos);
        if (const auto px = cam_.project(bearing)) inits[i] = *px - features_[i].pos;
      }
    }

    std::vector<TrackOutcome> outcomes(features_.size());
    for (size_t i = 0; i < features_.size(); ++i) {
      outcomes[i] = choice == TrackerChoice::DT_KLT
                        ? dt_klt_track_one(prev_->dt_pyr, cur->dt_pyr, positions[i], inits[i], cfg_)
                        : klt_track_one(prev_->intensity_pyr, cur->intensity_pyr, positions[i],
                                        inits[i], cfg_);
      if (!outcomes[i].ok) ++res.diag.losses[int(outcomes[i].reason) - 1];
    }

    // geometric verification on survivors
    std::vector<std::pair<Vec2, Vec2>> matches;
    std::vector<size_t> match_idx;
    for (size_t i = 0; i < features_.size(); ++i)
      if (outcomes[i].ok) {
        matches.emplace_back(positions[i], outcomes[i].new_pos);
        match_idx.push_back(i);
      }
    const OutlierResult geo = reject_outliers(matches, cam_, cfg_.ransac_thresh_px, seed);

    std::vector<Feature> kept;
    kept.reserve(features_.size());
    for (size_t m = 0; m < matches.size(); ++m) {
      if (!geo.inlier[m]) continue;
      Feature f = features_[match_idx[m]];
      f.pos = outcomes[match_idx[m]].new_pos;
      f.track_len += 1;
      f.provenance = choice;
      kept.push_back(f);
      res.observations.push_back({f.id, f.pos, f.track_len, choice});
    }
    res.diag.n_tracked = int(kept.size());
    res.diag.n_lost = int(features_.size() - kept.size());
    features_ = std::move(kept);

    detect_into(*cur, res);
    prev_ = cur;
    prev_has_edges_ = true;
    return res;
  }

  const std::vector<Feature>& features() const { return features_; }
  int64_t next_id() const { return next_id_; }

 private:
  void detect_into(const FrameData& frame, StepResult& res) {
    if (frame.edges.count() == 0) {
      res.diag.low_texture = true;
      return;
    }
    auto det = detect_new_features(frame.edges, features_, cfg_);
    res.diag.low_texture = det.low_texture;
    for (const Vec2& p : det.positions) {
      Feature f;
      f.id = next_id_++;
      f.pos = p;
      f.first_frame = frame.frame_idx;
      f.track_len = 1;
      features_.push_back(f);
      res.observations.push_back({f.id, f.pos, f.track_len, TrackerChoice::DT_KLT});
      ++res.diag.n_new;
    }
  }

  void carry_predicted(const Mat3& R_cc) {
    for (auto& f : features_) {
      const Vec3 bearing = R_cc * cam_.unit_bearing(f.pos);
      if (const auto px = cam_.project(bearing)) {
        if (px->x() >= 0 && px->y() >= 0 && px->x() <= cam_.width - 1 &&
            px->y() <= cam_.height - 1)
          f.pos = *px;
      }
    }
  }

  TrackerConfig cfg_;
  CameraModel cam_;
  std::vector<Feature> features_;
  std::shared_ptr<const FrameData> prev_;
  bool prev_has_edges_ = false;
  int64_t next_id_ = 0;
};

}  // namespace edgevio
