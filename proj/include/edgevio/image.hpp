// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "edgevio/common.hpp"

namespace edgevio {

/// Raw sensor image, 8- or 16-bit single channel. Samples are stored in a
/// uint16 raster regardless of depth; bit_depth records the nominal range.
struct RawImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;  // 8 or 16
  std::vector<uint16_t> data;
  double timestamp = 0.0;  // seconds, monotonic within a sequence
  bool degenerate = false;  // set by radiometric rescaling on flat histograms

  uint16_t at(int x, int y) const { return data[size_t(y) * width + x]; }
  uint16_t& at(int x, int y) { return data[size_t(y) * width + x]; }
  size_t size() const { return data.size(); }
};

/// Dense float raster sharing the integer pixel-center coordinate convention
/// (sample (x,y) lives at position (x,y), valid domain [0,w-1]x[0,h-1]).
struct ImageF {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  ImageF() = default;
  ImageF(int w, int h, float fill = 0.f) : width(w), height(h), data(size_t(w) * h, fill) {}

  float at(int x, int y) const { return data[size_t(y) * width + x]; }
  float& at(int x, int y) { return data[size_t(y) * width + x]; }

  bool contains(double u, double v) const {
    return u >= 0.0 && v >= 0.0 && u <= width - 1.0 && v <= height - 1.0;
  }

  /// Bilinear sample; pos must be inside [0,w-1]x[0,h-1].
  double bilinear(double u, double v) const {
    int x0 = std::min(int(u), width - 2);
    int y0 = std::min(int(v), height - 2);
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    const double fx = u - x0, fy = v - y0;
    const double v00 = at(x0, y0), v10 = at(x0 + 1, y0);
    const double v01 = at(x0, y0 + 1), v11 = at(x0 + 1, y0 + 1);
    return (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11;
  }
};

inline ImageF to_float(const RawImage& img) {
  ImageF out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i) out.data[i] = float(img.data[i]);
  return out;
}

/// 2x2 box downsample, ceil(n/2) output dimensions. Odd trailing rows/columns
/// average over the in-bounds samples only.
inline ImageF downsample_2x2(const ImageF& in) {
  ImageF out((in.width + 1) / 2, (in.height + 1) / 2);
  for (int y = 0; y < out.height; ++y) {
    for (int x = 0; x < out.width; ++x) {
      int x0 = 2 * x, y0 = 2 * y;
      int x1 = std::min(x0 + 1, in.width - 1), y1 = std::min(y0 + 1, in.height - 1);
      out.at(x, y) =
          0.25f * (in.at(x0, y0) + in.at(x1, y0) + in.at(x0, y1) + in.at(x1, y1));
    }
  }
  return out;
}

/// Intensity pyramid for the standard KLT path. Level 0 is full resolution.
struct ImagePyramid {
  std::vector<ImageF> levels;
};

inline ImagePyramid build_image_pyramid(const ImageF& base, int num_levels) {
  ImagePyramid pyr;
  pyr.levels.reserve(num_levels);
  pyr.levels.push_back(base);
  for (int l = 1; l < num_levels; ++l) pyr.levels.push_back(downsample_2x2(pyr.levels.back()));
  return pyr;
}

}  // namespace edgevio
