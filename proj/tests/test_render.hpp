// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
// Minimal 2-D line-image renderer for tracker tests: bright smooth ridges on a
// gray background, the same image model the full synthetic world uses.
#pragma once

#include <memory>

#include "edgevio/tracking.hpp"

namespace test_render {

using edgevio::RawImage;
using edgevio::Vec2;

struct Seg2 {
  Vec2 a, b;
};

inline RawImage render_lines_2d(int w, int h, const std::vector<Seg2>& segs, double line_sigma,
                                double bg, double amp, double noise_sigma = 0.0,
                                uint64_t seed = 0, double timestamp = 0.0) {
  auto dist_to_seg = [](const Vec2& p, const Seg2& s) {
    const Vec2 d = s.b - s.a;
    const double len2 = d.squaredNorm();
    double t = len2 > 0 ? (p - s.a).dot(d) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    return (p - (s.a + t * d)).norm();
  };
  edgevio::Rng rng(seed);
  RawImage img;
  img.width = w;
  img.height = h;
  img.bit_depth = 8;
  img.timestamp = timestamp;
  img.data.resize(size_t(w) * h);
  const double reach = 4.0 * line_sigma;
  // rasterize per segment into a float buffer with max blending
  std::vector<float> accum(size_t(w) * h, 0.f);
  for (const auto& s : segs) {
    const int x0 = std::max(0, int(std::floor(std::min(s.a.x(), s.b.x()) - reach)));
    const int x1 = std::min(w - 1, int(std::ceil(std::max(s.a.x(), s.b.x()) + reach)));
    const int y0 = std::max(0, int(std::floor(std::min(s.a.y(), s.b.y()) - reach)));
    const int y1 = std::min(h - 1, int(std::ceil(std::max(s.a.y(), s.b.y()) + reach)));
    for (int y = y0; y <= y1; ++y)
      for (int x = x0; x <= x1; ++x) {
        const double d = dist_to_seg(Vec2(x, y), s);
        if (d > reach) continue;
        const float v = float(std::exp(-0.5 * d * d / (line_sigma * line_sigma)));
        float& acc = accum[size_t(y) * w + x];
        acc = std::max(acc, v);
      }
  }
  for (size_t i = 0; i < accum.size(); ++i) {
    double v = bg + amp * accum[i];
    if (noise_sigma > 0) v += noise_sigma * rng.gaussian();
    img.data[i] = uint16_t(std::clamp(v + 0.5, 0.0, 255.0));
  }
  return img;
}

inline std::vector<Seg2> grid_segments(double x0, double y0, double x1, double y1, int nx,
                                       int ny) {
  std::vector<Seg2> segs;
  for (int i = 0; i <= nx; ++i) {
    const double x = x0 + (x1 - x0) * i / nx;
    segs.push_back({{x, y0}, {x, y1}});
  }
  for (int j = 0; j <= ny; ++j) {
    const double y = y0 + (y1 - y0) * j / ny;
    segs.push_back({{x0, y}, {x1, y}});
  }
  return segs;
}

inline std::vector<Seg2> shifted(const std::vector<Seg2>& segs, const Vec2& d) {
  std::vector<Seg2> out = segs;
  for (auto& s : out) {
    s.a += d;
    s.b += d;
  }
  return out;
}

inline std::shared_ptr<const edgevio::FrameData> make_frame(
    const RawImage& img, int frame_idx, const edgevio::PreprocessParams& p = {}) {
  return std::make_shared<const edgevio::FrameData>(
      edgevio::preprocess_frame(img, p, frame_idx));
}

inline edgevio::CameraModel test_camera(int w = 320, int h = 240) {
  edgevio::CameraModel cam;
  cam.fx = cam.fy = 300.0;
  cam.cx = w / 2.0;
  cam.cy = h / 2.0;
  cam.width = w;
  cam.height = h;
  return cam;
}

}  // namespace test_render
