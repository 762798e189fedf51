// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <optional>
#include <vector>

#include "edgevio/edges.hpp"

namespace edgevio {

namespace detail {

inline constexpr int64_t kEdtInf = int64_t(1) << 40;

// 1-D squared-distance transform (lower envelope of parabolas), exact integer
// arithmetic: parabola intersections are kept as rationals and compared by
// cross-multiplication, so results match brute force bit for bit.
inline void edt_1d(const int64_t* f, int64_t* d, int n, int* v, int64_t* zn, int64_t* zd) {
  int k = 0;
  v[0] = 0;
  zn[0] = -1;  // z[0] = -inf encoded as den 0
  zd[0] = 0;
  zn[1] = 1;
  zd[1] = 0;  // z[1] = +inf
  auto intersect = [&](int q, int p, int64_t& num, int64_t& den) {
    num = (f[q] + int64_t(q) * q) - (f[p] + int64_t(p) * p);
    den = 2 * int64_t(q - p);  // q > p, positive
  };
  for (int q = 1; q < n; ++q) {
    int64_t sn, sd;
    intersect(q, v[k], sn, sd);
    // pop parabolas the new one dominates: s <= z[k]
    while (k > 0 && sn * zd[k] <= zn[k] * sd) {
      --k;
      intersect(q, v[k], sn, sd);
    }
    ++k;
    v[k] = q;
    zn[k] = sn;
    zd[k] = sd;
    zn[k + 1] = 1;
    zd[k + 1] = 0;
  }
  k = 0;
  for (int x = 0; x < n; ++x) {
    // advance while z[k+1] < x
    while (zd[k + 1] != 0 ? zn[k + 1] < int64_t(x) * zd[k + 1] : zn[k + 1] < 0) ++k;
    const int64_t dx = x - v[k];
    d[x] = dx * dx + f[v[k]];
  }
}

}  // namespace detail

/// Exact squared Euclidean distance (pixel units) to the nearest set mask bit.
/// Throws EmptyEdgeImageError when the mask has no set bits.
inline std::vector<int64_t> edt_squared(const std::vector<uint8_t>& mask, int w, int h) {
  bool any = false;
  for (uint8_t m : mask)
    if (m) {
      any = true;
      break;
    }
  if (!any) throw EmptyEdgeImageError("distance_transform: empty edge image");

  std::vector<int64_t> d(size_t(w) * h);
  // pass 1: per column, squared distance to nearest edge within the column
  std::vector<int32_t> g(size_t(w) * h);
  const int32_t far = w + h + 1;
  for (int x = 0; x < w; ++x) {
    int32_t dist = far;
    for (int y = 0; y < h; ++y) {
      dist = mask[size_t(y) * w + x] ? 0 : std::min(dist + 1, far);
      g[size_t(y) * w + x] = dist;
    }
    dist = far;
    for (int y = h - 1; y >= 0; --y) {
      dist = mask[size_t(y) * w + x] ? 0 : std::min(dist + 1, far);
      int32_t& gv = g[size_t(y) * w + x];
      gv = std::min(gv, dist);
    }
  }
  // pass 2: per row, lower envelope over columns
  std::vector<int64_t> f(w), row_out(w);
  std::vector<int> v(w);
  std::vector<int64_t> zn(w + 1), zd(w + 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int64_t gv = g[size_t(y) * w + x];
      f[x] = gv >= far ? detail::kEdtInf : gv * gv;
    }
    detail::edt_1d(f.data(), row_out.data(), w, v.data(), zn.data(), zd.data());
    for (int x = 0; x < w; ++x) d[size_t(y) * w + x] = row_out[x];
  }
  return d;
}

/// Per-pixel Euclidean distance (pixels) to the nearest edge pixel center.
struct DistanceField {
  int width = 0;
  int height = 0;
  int level = 0;
  std::vector<float> dist;

  float at(int x, int y) const { return dist[size_t(y) * width + x]; }
};

inline DistanceField distance_transform_mask(const std::vector<uint8_t>& mask, int w, int h,
                                             int level = 0) {
  DistanceField out;
  out.width = w;
  out.height = h;
  out.level = level;
  const auto d2 = edt_squared(mask, w, h);
  out.dist.resize(d2.size());
  for (size_t i = 0; i < d2.size(); ++i) out.dist[i] = float(std::sqrt(double(d2[i])));
  return out;
}

inline DistanceField distance_transform(const EdgeImage& edges) {
  return distance_transform_mask(edges.mask, edges.width, edges.height, 0);
}

/// Bilinear sample of a distance field; nullopt outside [0,w-1]x[0,h-1]
/// (the tracker treats that as a lost feature).
inline std::optional<double> sample_bilinear(const DistanceField& field, double u, double v) {
  if (!(u >= 0.0 && v >= 0.0 && u <= field.width - 1.0 && v <= field.height - 1.0))
    return std::nullopt;
  int x0 = std::min(int(u), field.width - 2);
  int y0 = std::min(int(v), field.height - 2);
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  const double fx = u - x0, fy = v - y0;
  const double v00 = field.at(x0, y0), v10 = field.at(x0 + 1, y0);
  const double v01 = field.at(x0, y0 + 1), v11 = field.at(x0 + 1, y0 + 1);
  return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11;
}

/// Multi-resolution distance fields plus the edge masks they were built from.
/// Masks are OR-downsampled over 2x2 blocks; the transform is recomputed per
/// level rather than downsampled.
struct FieldPyramid {
  std::vector<DistanceField> levels;
  std::vector<std::vector<uint8_t>> masks;

  int num_levels() const { return int(levels.size()); }
};

inline FieldPyramid build_pyramid(const EdgeImage& edges, int num_levels) {
  if (num_levels < 2) throw Error("build_pyramid: need num_levels >= 2");
  if (edges.width < (1 << num_levels) || edges.height < (1 << num_levels))
    throw Error("build_pyramid: image too small for requested levels");

  FieldPyramid pyr;
  pyr.masks.push_back(edges.mask);
  int w = edges.width, h = edges.height;
  pyr.levels.push_back(distance_transform_mask(pyr.masks[0], w, h, 0));
  for (int l = 1; l < num_levels; ++l) {
    const auto& prev = pyr.masks[l - 1];
    const int pw = w, ph = h;
    w = (w + 1) / 2;
    h = (h + 1) / 2;
    std::vector<uint8_t> m(size_t(w) * h, 0);
    for (int y = 0; y < ph; ++y)
      for (int x = 0; x < pw; ++x)
        if (prev[size_t(y) * pw + x]) m[size_t(y / 2) * w + x / 2] = 1;
    pyr.levels.push_back(distance_transform_mask(m, w, h, l));
    pyr.masks.push_back(std::move(m));
  }
  return pyr;
}

}  // namespace edgevio
