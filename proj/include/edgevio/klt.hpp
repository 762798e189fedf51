// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <span>
#include <vector>

#include "edgevio/distance_field.hpp"
#include "edgevio/image.hpp"

namespace edgevio {

struct TrackerConfig {
  int window_half_x = 10;  // patch is (2wx+1) x (2wy+1)
  int window_half_y = 10;
  int pyramid_levels = 4;
  int max_iters = 30;
  double convergence_eps = 0.01;  // pixels
  int min_features = 150;
  double min_spacing = 20.0;  // pixels between detected features
  double distance_cap = 20.0;  // clamp on sampled distances, pixels
  double klt_max_residual = 25.0;  // mean |r|, 8-bit intensity units
  double dt_max_residual = 3.0;    // mean |r|, distance pixels
  double klt_min_eig = 1.0;   // flatness floor (max tensor eig per px), intensity
  double dt_min_eig = 1e-4;   // flatness floor (max tensor eig per px), distance
  double ransac_thresh_px = 1.0;
  // stability metric (Eq. 7)
  double alpha = 1.0;
  double beta = 2.0;
  double s_th = 0.25;
  bool record_cost_history = false;

  void validate() const {
    if (window_half_x <= 0 || window_half_y <= 0 || pyramid_levels <= 0 || max_iters <= 0 ||
        min_features <= 0 || min_spacing <= 0 || distance_cap <= 0)
      throw ConfigError("tracker config: all sizes must be positive");
    if (!(convergence_eps > 0 && convergence_eps < 1))
      throw ConfigError("tracker config: convergence_eps must be in (0,1)");
    if (alpha < 0 || beta < 0 || s_th <= 0)
      throw ConfigError("tracker config: stability weights must be non-negative, s_th > 0");
  }
};

enum class LossReason {
  None,
  OutOfBounds,
  SingularHessian,
  HighResidual,
  FarFromEdges,  // DT tracker only: window mean distance above cap/2
};

struct TrackOutcome {
  bool ok = false;
  Vec2 new_pos = Vec2::Zero();  // full-resolution pixels
  LossReason reason = LossReason::None;
  double final_cost = 0.0;  // mean squared residual at level 0
  int iterations = 0;
  std::vector<double> cost_history;  // accepted per-iteration costs, coarse to fine
};

/// Pyramid prepared for patch alignment: per level, the sampled field plus its
/// central-difference gradient rasters (shared by every feature and iteration).
struct TrackPyramid {
  std::vector<ImageF> val, gx, gy;
  int num_levels() const { return int(val.size()); }
};

namespace detail {

inline void add_gradient_rasters(TrackPyramid& tp, const ImageF& v) {
  ImageF gx(v.width, v.height, 0.f), gy(v.width, v.height, 0.f);
  for (int y = 1; y + 1 < v.height; ++y)
    for (int x = 1; x + 1 < v.width; ++x) {
      gx.at(x, y) = 0.5f * (v.at(x + 1, y) - v.at(x - 1, y));
      gy.at(x, y) = 0.5f * (v.at(x, y + 1) - v.at(x, y - 1));
    }
  tp.gx.push_back(std::move(gx));
  tp.gy.push_back(std::move(gy));
}

}  // namespace detail

inline TrackPyramid prepare_tracking(const ImagePyramid& pyr) {
  TrackPyramid tp;
  for (const auto& level : pyr.levels) {
    tp.val.push_back(level);
    detail::add_gradient_rasters(tp, level);
  }
  return tp;
}

inline TrackPyramid prepare_tracking(const FieldPyramid& pyr, double cap) {
  TrackPyramid tp;
  for (const auto& level : pyr.levels) {
    ImageF v(level.width, level.height);
    for (size_t i = 0; i < level.dist.size(); ++i)
      v.data[i] = std::min(level.dist[i], float(cap));
    detail::add_gradient_rasters(tp, v);
    tp.val.push_back(std::move(v));
  }
  return tp;
}

namespace detail {

inline bool window_inside(const ImageF& f, const Vec2& c, int wx, int wy) {
  // one extra pixel of margin so the gradient rasters are valid
  return c.x() - wx - 1 >= 0.0 && c.y() - wy - 1 >= 0.0 && c.x() + wx + 1 <= f.width - 1.0 &&
         c.y() + wy + 1 <= f.height - 1.0;
}

struct LevelStatus {
  bool in_bounds = false;
  bool flat = false;  // max structure-tensor eigenvalue below the floor
  Vec2 d = Vec2::Zero();
  double mean_abs_residual = 0.0;
  double mean_sample = 0.0;
  double cost = 0.0;  // sum of squared residuals
};

// Gauss-Newton alignment of one patch at one level. The normal equations are
// lightly damped so rank-1 windows (straight edges, the aperture case) step
// only along the constrained direction and stay put along the degenerate one.
// A step is accepted only if it decreases the cost; rejected steps retry at
// half length.
inline LevelStatus align_level(const ImageF& ref, const ImageF& cur_v, const ImageF& cur_gx,
                               const ImageF& cur_gy, const Vec2& pos, Vec2 d, int wx, int wy,
                               int max_iters, double eps, double flat_eig_per_px,
                               int* iter_count, std::vector<double>* cost_log) {
  LevelStatus st;
  if (!window_inside(ref, pos, wx, wy) || !window_inside(cur_v, pos + d, wx, wy)) return st;
  st.in_bounds = true;

  const int n = (2 * wx + 1) * (2 * wy + 1);
  std::vector<double> tmpl(n);
  {
    int idx = 0;
    for (int j = -wy; j <= wy; ++j)
      for (int i = -wx; i <= wx; ++i) tmpl[idx++] = ref.bilinear(pos.x() + i, pos.y() + j);
  }

  auto eval_cost = [&](const Vec2& disp) {
    double c = 0.0;
    int k = 0;
    for (int j = -wy; j <= wy; ++j)
      for (int i = -wx; i <= wx; ++i) {
        const double r =
            tmpl[k++] - cur_v.bilinear(pos.x() + i + disp.x(), pos.y() + j + disp.y());
        c += r * r;
      }
    return c;
  };

  double cost = eval_cost(d);
  if (cost_log) cost_log->push_back(cost / n);

  for (int it = 0; it < max_iters; ++it) {
    Mat2 H = Mat2::Zero();
    Vec2 g = Vec2::Zero();
    double ma = 0.0, ms = 0.0;
    int k = 0;
    for (int j = -wy; j <= wy; ++j)
      for (int i = -wx; i <= wx; ++i) {
        const double u = pos.x() + i + d.x(), v = pos.y() + j + d.y();
        const Vec2 grad(cur_gx.bilinear(u, v), cur_gy.bilinear(u, v));
        const double s = cur_v.bilinear(u, v);
        const double r = tmpl[k++] - s;
        H += grad * grad.transpose();
        g += grad * r;
        ma += std::abs(r);
        ms += s;
      }
    st.mean_abs_residual = ma / n;
    st.mean_sample = ms / n;
    const double max_eig =
        0.5 * (H.trace() + std::sqrt(sq(H(0, 0) - H(1, 1)) + 4.0 * sq(H(0, 1))));
    if (max_eig / n < flat_eig_per_px) {
      st.flat = true;
      break;
    }
    H.diagonal().array() += 1e-3 * max_eig;
    Vec2 step = H.ldlt().solve(g);
    if (iter_count) ++*iter_count;

    bool accepted = false;
    for (int half = 0; half < 4; ++half) {
      const Vec2 trial = d + step;
      if (!window_inside(cur_v, pos + trial, wx, wy)) {
        step *= 0.5;
        continue;
      }
      const double trial_cost = eval_cost(trial);
      if (trial_cost < cost) {
        d = trial;
        cost = trial_cost;
        if (cost_log) cost_log->push_back(cost / n);
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    if (step.norm() < eps) break;
  }

  // final residual statistics at the accepted displacement
  {
    double ma = 0.0, ms = 0.0;
    int k = 0;
    for (int j = -wy; j <= wy; ++j)
      for (int i = -wx; i <= wx; ++i) {
        const double s =
            cur_v.bilinear(pos.x() + i + d.x(), pos.y() + j + d.y());
        ma += std::abs(tmpl[k++] - s);
        ms += s;
      }
    st.mean_abs_residual = ma / n;
    st.mean_sample = ms / n;
  }
  st.cost = cost;
  st.d = d;
  return st;
}

inline TrackOutcome track_pyramid(const TrackPyramid& ref, const TrackPyramid& cur,
                                  const Vec2& pos, const Vec2& d_init, int wx, int wy,
                                  int max_iters, double eps, double max_residual,
                                  double flat_eig_per_px, double far_mean_limit,
                                  bool record_history) {
  TrackOutcome out;
  const int levels = ref.num_levels();
  Vec2 d = d_init / double(1 << (levels - 1));

  std::vector<double>* log_ptr = record_history ? &out.cost_history : nullptr;
  for (int l = levels - 1; l >= 0; --l) {
    const Vec2 pos_l = pos / double(1 << l);
    auto st = align_level(ref.val[l], cur.val[l], cur.gx[l], cur.gy[l], pos_l, d, wx, wy,
                          max_iters, eps, flat_eig_per_px, &out.iterations, log_ptr);
    if (st.in_bounds) d = st.d;
    if (l > 0) {
      d *= 2.0;
      continue;
    }
    // level 0 verdict
    if (!st.in_bounds) {
      out.reason = LossReason::OutOfBounds;
      return out;
    }
    if (st.flat) {
      out.reason = LossReason::SingularHessian;
      return out;
    }
    const int n = (2 * wx + 1) * (2 * wy + 1);
    out.final_cost = st.cost / n;
    if (st.mean_abs_residual > max_residual) {
      out.reason = LossReason::HighResidual;
      return out;
    }
    if (far_mean_limit > 0.0 && st.mean_sample > far_mean_limit) {
      out.reason = LossReason::FarFromEdges;
      return out;
    }
  }
  out.ok = true;
  out.new_pos = pos + d;
  return out;
}

}  // namespace detail

/// Standard pyramidal Lucas-Kanade on intensity images.
inline TrackOutcome klt_track_one(const TrackPyramid& prev, const TrackPyramid& cur,
                                  const Vec2& pos, const Vec2& d_init, const TrackerConfig& cfg) {
  return detail::track_pyramid(prev, cur, pos, d_init, cfg.window_half_x, cfg.window_half_y,
                               cfg.max_iters, cfg.convergence_eps, cfg.klt_max_residual,
                               cfg.klt_min_eig, /*far_mean_limit=*/0.0, cfg.record_cost_history);
}

/// DT-KLT: the same alignment machinery on distance fields, minimizing the
/// window sum of [D_ref - D_cur(.+d)]^2. Additionally lost when the aligned
/// window's mean distance exceeds half the distance cap.
inline TrackOutcome dt_klt_track_one(const TrackPyramid& prev, const TrackPyramid& cur,
                                     const Vec2& pos, const Vec2& d_init,
                                     const TrackerConfig& cfg) {
  return detail::track_pyramid(prev, cur, pos, d_init, cfg.window_half_x, cfg.window_half_y,
                               cfg.max_iters, cfg.convergence_eps, cfg.dt_max_residual,
                               cfg.dt_min_eig, 0.5 * cfg.distance_cap, cfg.record_cost_history);
}

inline std::vector<TrackOutcome> klt_track(const TrackPyramid& prev, const TrackPyramid& cur,
                                           std::span<const Vec2> positions,
                                           std::span<const Vec2> d_inits,
                                           const TrackerConfig& cfg) {
  std::vector<TrackOutcome> out(positions.size());
  for (size_t i = 0; i < positions.size(); ++i)
    out[i] = klt_track_one(prev, cur, positions[i], d_inits.empty() ? Vec2::Zero() : d_inits[i],
                           cfg);
  return out;
}

inline std::vector<TrackOutcome> klt_track(const ImagePyramid& prev, const ImagePyramid& cur,
                                           std::span<const Vec2> positions,
                                           std::span<const Vec2> d_inits,
                                           const TrackerConfig& cfg) {
  return klt_track(prepare_tracking(prev), prepare_tracking(cur), positions, d_inits, cfg);
}

inline std::vector<TrackOutcome> dt_klt_track(const FieldPyramid& prev, const FieldPyramid& cur,
                                              std::span<const Vec2> positions,
                                              std::span<const Vec2> d_inits,
                                              const TrackerConfig& cfg) {
  const TrackPyramid p = prepare_tracking(prev, cfg.distance_cap);
  const TrackPyramid c = prepare_tracking(cur, cfg.distance_cap);
  std::vector<TrackOutcome> out(positions.size());
  for (size_t i = 0; i < positions.size(); ++i)
    out[i] =
        dt_klt_track_one(p, c, positions[i], d_inits.empty() ? Vec2::Zero() : d_inits[i], cfg);
  return out;
}

}  // namespace edgevio
