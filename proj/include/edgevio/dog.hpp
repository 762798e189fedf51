// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <cmath>
#include <vector>

#include "edgevio/image.hpp"

namespace edgevio {

/// Difference-of-Gaussians response raster.
struct DogImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major
  double sigma = 0.0;
  double k = 0.0;

  float at(int x, int y) const { return values[size_t(y) * width + x]; }
  float& at(int x, int y) { return values[size_t(y) * width + x]; }
};

/// Sampled 1-D Gaussian, radius ceil(3*sigma), taps normalized to unit sum so
/// a DoG kernel built from two of these sums to exactly zero.
inline std::vector<double> gaussian_kernel(double sigma) {
  const int radius = int(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// reflect-101 index: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

/// Separable convolution with reflect-101 borders.
inline ImageF convolve_separable(const ImageF& img, const std::vector<double>& kernel) {
  const int r = int(kernel.size() / 2);
  ImageF tmp(img.width, img.height);
  // horizontal pass
  for (int y = 0; y < img.height; ++y) {
    const float* row = &img.data[size_t(y) * img.width];
    for (int x = 0; x < img.width; ++x) {
      double acc = 0.0;
      if (x - r >= 0 && x + r < img.width) {
        for (int i = -r; i <= r; ++i) acc += kernel[i + r] * row[x + i];
      } else {
        for (int i = -r; i <= r; ++i) acc += kernel[i + r] * row[reflect101(x + i, img.width)];
      }
      tmp.at(x, y) = float(acc);
    }
  }
  // vertical pass
  ImageF out(img.width, img.height);
  std::vector<double> acc(img.width);
  for (int y = 0; y < img.height; ++y) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int i = -r; i <= r; ++i) {
      const float* row = &tmp.data[size_t(reflect101(y + i, img.height)) * img.width];
      const double kv = kernel[i + r];
      for (int x = 0; x < img.width; ++x) acc[x] += kv * row[x];
    }
    for (int x = 0; x < img.width; ++x) out.at(x, y) = float(acc[x]);
  }
  return out;
}

/// DoG band-pass: blur(img, sigma) - blur(img, k*sigma).
/// Requires sigma > 0, k > 1 and the larger kernel to fit inside the image.
inline DogImage dog_filter(const RawImage& img, double sigma, double k) {
  if (sigma <= 0.0 || k <= 1.0) throw Error("dog_filter: need sigma>0 and k>1");
  if (img.width < 7 || img.height < 7) throw Error("dog_filter: image smaller than 7x7");
  const int wide_radius = int(std::ceil(3.0 * k * sigma));
  if (2 * wide_radius + 1 > img.width || 2 * wide_radius + 1 > img.height)
    throw Error("dog_filter: kernel larger than image");

  const ImageF f = to_float(img);
  const ImageF narrow = convolve_separable(f, gaussian_kernel(sigma));
  const ImageF wide = convolve_separable(f, gaussian_kernel(k * sigma));

  DogImage dog;
  dog.width = img.width;
  dog.height = img.height;
  dog.sigma = sigma;
  dog.k = k;
  dog.values.resize(f.data.size());
  for (size_t i = 0; i < f.data.size(); ++i) dog.values[i] = narrow.data[i] - wide.data[i];
  return dog;
}

}  // namespace edgevio
