// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "edgevio/factors.hpp"

namespace edgevio {

struct SchurResult {
  MatX H;  // reduced information over the kept variables
  VecX g;
  bool regularized = false;  // eigenvalue floor was applied to the block
};

/// Gaussian marginalization by Schur complement: eliminates the variables in
/// `marg` from the quadratic form (H, g). A rank-deficient eliminated block
/// is floored at 1e-8 on its eigenvalues (flagged in the result).
inline SchurResult marginalize_gaussian(const MatX& H, const VecX& g,
                                        const std::vector<int>& marg_idx,
                                        const std::vector<int>& keep_idx,
                                        double eig_floor = 1e-8) {
  const int m = int(marg_idx.size()), k = int(keep_idx.size());
  MatX Hmm(m, m), Hmk(m, k), Hkk(k, k);
  VecX gm(m), gk(k);
  for (int r = 0; r < m; ++r) {
    gm(r) = g(marg_idx[r]);
    for (int c = 0; c < m; ++c) Hmm(r, c) = H(marg_idx[r], marg_idx[c]);
    for (int c = 0; c < k; ++c) Hmk(r, c) = H(marg_idx[r], keep_idx[c]);
  }
  for (int r = 0; r < k; ++r) {
    gk(r) = g(keep_idx[r]);
    for (int c = 0; c < k; ++c) Hkk(r, c) = H(keep_idx[r], keep_idx[c]);
  }

  SchurResult out;
  Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (Hmm + Hmm.transpose()));
  VecX evals = eig.eigenvalues();
  const double scale = std::max(1.0, evals.cwiseAbs().maxCoeff());
  if (evals.minCoeff() < eig_floor * scale) {
    out.regularized = true;
    for (int i = 0; i < evals.size(); ++i) evals(i) = std::max(evals(i), eig_floor * scale);
  }
  const MatX Hmm_inv =
      eig.eigenvectors() * evals.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();

  out.H = Hkk - Hmk.transpose() * Hmm_inv * Hmk;
  out.g = gk - Hmk.transpose() * Hmm_inv * gm;
  return out;
}

/// Linearized Gaussian prior over a set of retained states, produced by
/// marginalization: r(x) = r0 + J * (x [-] x_lin) stacked over the states.
struct MarginalizationPrior {
  std::vector<int> frame_ids;          // which window frames the prior touches
  std::vector<ImuState> linearization;  // snapshot per frame, same order
  MatX J;   // rows x (15 * frames)
  VecX r0;

  bool empty() const { return J.size() == 0; }
  int dim() const { return int(J.rows()); }

  /// Stacked box-minus of the current states against the linearization point.
  VecX delta(const std::vector<const ImuState*>& current) const {
    VecX dx(15 * int(linearization.size()));
    for (size_t i = 0; i < linearization.size(); ++i)
      dx.segment<15>(15 * int(i)) = boxminus(*current[i], linearization[i]);
    return dx;
  }
};

/// Converts a quadratic form (H, gradient g) into sqrt factor form
/// r(dx) = r0 + J dx with J'J = H and J'r0 = g, dropping near-null
/// directions, so that 1/2 |r|^2 has the same gradient and curvature.
inline void quadratic_to_sqrt_form(const MatX& H, const VecX& g, MatX* J, VecX* r0,
                                   double rank_eps = 1e-10) {
  Eigen::SelfAdjointEigenSolver<MatX> eig(0.5 * (H + H.transpose()));
  const VecX& evals = eig.eigenvalues();
  const double scale = std::max(evals.cwiseAbs().maxCoeff(), 1e-300);
  std::vector<int> keep;
  for (int i = 0; i < evals.size(); ++i)
    if (evals(i) > rank_eps * scale) keep.push_back(i);
  MatX V(H.rows(), int(keep.size()));
  VecX s(int(keep.size()));
  for (size_t i = 0; i < keep.size(); ++i) {
    V.col(int(i)) = eig.eigenvectors().col(keep[i]);
    s(int(i)) = evals(keep[i]);
  }
  *J = s.cwiseSqrt().asDiagonal() * V.transpose();
  *r0 = s.cwiseSqrt().cwiseInverse().asDiagonal() * V.transpose() * g;
}

}  // namespace edgevio
