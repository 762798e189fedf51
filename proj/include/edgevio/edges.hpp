// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <array>
#include <optional>
#include <vector>

#include "edgevio/dog.hpp"

namespace edgevio {

/// Percentile-clipped linear map of a 16-bit image onto [0,255].
/// 8-bit input passes through unchanged. A flat histogram (lo == hi
/// percentile) yields constant mid-gray flagged degenerate.
inline RawImage rescale_radiometric(const RawImage& img, double lo_pct = 0.01,
                                    double hi_pct = 0.99) {
  if (!(lo_pct >= 0.0 && lo_pct < hi_pct && hi_pct <= 1.0))
    throw Error("rescale_radiometric: need 0 <= lo_pct < hi_pct <= 1");
  if (img.bit_depth == 8) return img;

  // percentile via histogram; value at index floor(p*(N-1)) of the sorted data
  std::vector<uint32_t> hist(65536, 0);
  for (uint16_t v : img.data) ++hist[v];
  const size_t n = img.data.size();
  auto percentile = [&](double p) -> uint16_t {
    size_t target = size_t(p * double(n - 1));
    size_t seen = 0;
    for (int v = 0; v < 65536; ++v) {
      seen += hist[v];
      if (seen > target) return uint16_t(v);
    }
    return 65535;
  };
  const uint16_t lo = percentile(lo_pct);
  const uint16_t hi = percentile(hi_pct);

  RawImage out;
  out.width = img.width;
  out.height = img.height;
  out.bit_depth = 8;
  out.timestamp = img.timestamp;
  out.data.resize(n);
  if (lo == hi) {
    std::fill(out.data.begin(), out.data.end(), uint16_t(128));
    out.degenerate = true;
    return out;
  }
  const double scale = 255.0 / (double(hi) - double(lo));
  for (size_t i = 0; i < n; ++i) {
    double v = (double(img.data[i]) - double(lo)) * scale;
    out.data[i] = uint16_t(std::clamp(v + 0.5, 0.0, 255.0));
  }
  return out;
}

/// Plane a*u + b*v + c*z + d = 0 fitted to a 3x3 DoG patch, normalized c=-1
/// so (a,b) is the DoG gradient. Closed-form least squares on u,v in {-1,0,1}.
struct DogPlane {
  double a = 0, b = 0, c = -1, d = 0;
  double grad_mag() const { return std::sqrt(a * a + b * b); }
};

inline DogPlane fit_dog_plane(const std::array<double, 9>& patch) {
  // rows are v=-1,0,1; columns u=-1,0,1
  DogPlane p;
  double su = 0, sv = 0, s = 0;
  for (int j = 0; j < 3; ++j) {
    for (int i = 0; i < 3; ++i) {
      const double z = patch[j * 3 + i];
      su += (i - 1) * z;
      sv += (j - 1) * z;
      s += z;
    }
  }
  p.a = su / 6.0;  // sum of u^2 over the 9 samples
  p.b = sv / 6.0;
  p.c = -1.0;
  p.d = s / 9.0;
  return p;
}

/// One accepted edge pixel with its sub-pixel position and gradient.
struct EdgePoint {
  int row = 0, col = 0;        // integer pixel
  Vec2 uv = Vec2::Zero();      // sub-pixel position, (u,v) = (col,row) + offset
  Vec2 grad_dir = Vec2::Zero();  // unit (a,b)
  DogPlane plane;
};

/// Sub-pixel offset: perpendicular foot from the pixel center to the plane's
/// zero-crossing line a*u + b*v + d = 0. Rejected (nullopt) when the foot is
/// farther than half a pixel; the boundary itself is accepted.
inline std::optional<Vec2> subpixel_offset(const DogPlane& p) {
  const double g2 = p.a * p.a + p.b * p.b;
  if (g2 <= 0.0) return std::nullopt;
  Vec2 off = -p.d / g2 * Vec2(p.a, p.b);
  if (off.squaredNorm() > 0.25) return std::nullopt;
  return off;
}

/// Binarized edge image: mask + accepted sub-pixel points + 8-connected chains.
struct EdgeImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> mask;          // 1 where an accepted edge pixel sits
  std::vector<EdgePoint> points;      // one per set mask bit
  std::vector<std::vector<int>> chains;  // indices into points, consecutive 8-adjacent
  double timestamp = 0.0;

  int count() const { return int(points.size()); }
  bool mask_at(int x, int y) const { return mask[size_t(y) * width + x] != 0; }
};

namespace detail {

// Walks surviving edge pixels into chains whose consecutive entries are
// 8-neighbors. Endpoints (pixels with one unvisited neighbor) start chains so
// open curves come out in traversal order; junctions split into several chains.
inline void link_chains(EdgeImage& e, const std::vector<int>& point_index) {
  const int w = e.width, h = e.height;
  std::vector<uint8_t> visited(e.mask.size(), 0);
  static constexpr int dx[8] = {1, 1, 0, -1, -1, -1, 0, 1};
  static constexpr int dy[8] = {0, 1, 1, 1, 0, -1, -1, -1};

  auto unvisited_degree = [&](int x, int y) {
    int deg = 0;
    for (int k = 0; k < 8; ++k) {
      int nx = x + dx[k], ny = y + dy[k];
      if (nx >= 0 && ny >= 0 && nx < w && ny < h) {
        size_t idx = size_t(ny) * w + nx;
        if (e.mask[idx] && !visited[idx]) ++deg;
      }
    }
    return deg;
  };

  auto walk_from = [&](int x, int y) {
    std::vector<int> chain;
    for (;;) {
      const size_t idx = size_t(y) * w + x;
      visited[idx] = 1;
      chain.push_back(point_index[idx]);
      int best = -1, best_deg = 9;
      for (int k = 0; k < 8; ++k) {
        int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        size_t nidx = size_t(ny) * w + nx;
        if (!e.mask[nidx] || visited[nidx]) continue;
        int deg = unvisited_degree(nx, ny);
        if (deg < best_deg) {
          best_deg = deg;
          best = k;
        }
      }
      if (best < 0) break;
      x += dx[best];
      y += dy[best];
    }
    e.chains.push_back(std::move(chain));
  };

  // two sweeps: endpoints first, then whatever remains (loops)
  for (int pass = 0; pass < 2; ++pass) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const size_t idx = size_t(y) * w + x;
        if (!e.mask[idx] || visited[idx]) continue;
        if (pass == 0 && unvisited_degree(x, y) > 1) continue;
        walk_from(x, y);
      }
    }
  }
}

}  // namespace detail

/// Edge extraction from a DoG response: zero-crossing candidates (sign change
/// against any 4-neighbor), 3x3 plane fit, gradient-magnitude threshold,
/// sub-pixel refinement with the half-pixel rejection rule, 8-neighbor chains.
inline EdgeImage extract_edges(const DogImage& dog, double grad_mag_threshold,
                               double timestamp = 0.0) {
  if (grad_mag_threshold <= 0.0) throw Error("extract_edges: threshold must be > 0");
  EdgeImage e;
  e.width = dog.width;
  e.height = dog.height;
  e.timestamp = timestamp;
  e.mask.assign(size_t(dog.width) * dog.height, 0);
  std::vector<int> point_index(e.mask.size(), -1);

  const int w = dog.width, h = dog.height;
  for (int y = 1; y + 1 < h; ++y) {
    for (int x = 1; x + 1 < w; ++x) {
      const double z = dog.at(x, y);
      const bool crossing =
          z * dog.at(x - 1, y) < 0 || z * dog.at(x + 1, y) < 0 ||
          z * dog.at(x, y - 1) < 0 || z * dog.at(x, y + 1) < 0 ||
          (z == 0 && (dog.at(x - 1, y) != 0 || dog.at(x + 1, y) != 0 ||
                      dog.at(x, y - 1) != 0 || dog.at(x, y + 1) != 0));
      if (!crossing) continue;

      std::array<double, 9> patch;
      for (int j = -1; j <= 1; ++j)
        for (int i = -1; i <= 1; ++i) patch[(j + 1) * 3 + (i + 1)] = dog.at(x + i, y + j);
      const DogPlane plane = fit_dog_plane(patch);
      if (plane.grad_mag() < grad_mag_threshold) continue;

      const auto off = subpixel_offset(plane);
      if (!off) continue;

      EdgePoint p;
      p.row = y;
      p.col = x;
      p.uv = Vec2(x, y) + *off;
      p.grad_dir = Vec2(plane.a, plane.b) / plane.grad_mag();
      p.plane = plane;
      point_index[size_t(y) * w + x] = int(e.points.size());
      e.points.push_back(p);
      e.mask[size_t(y) * w + x] = 1;
    }
  }
  detail::link_chains(e, point_index);
  return e;
}

}  // namespace edgevio
