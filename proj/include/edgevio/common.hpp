// Copyright (c) 2026 The edgevio authors. Licensed under the Apache License 2.0.
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace edgevio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Quat = Eigen::Quaterniond;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
template <int R, int C>
using Mat = Eigen::Matrix<double, R, C>;
using MatX = Eigen::MatrixXd;
using VecX = Eigen::VectorXd;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
/// Thrown when a frame yields no edge pixels; callers skip the frame.
struct EmptyEdgeImageError : Error {
  using Error::Error;
};
struct InitializationFailed : Error {
  using Error::Error;
};

/// Deterministic RNG used everywhere randomness is needed. The gaussian is a
/// hand-rolled Box-Muller so streams do not depend on the standard library's
/// unspecified std::normal_distribution algorithm.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  double uniform() {  // [0,1)
    return (gen_() >> 11) * (1.0 / 9007199254740992.0);
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(gen_() % static_cast<uint64_t>(hi - lo + 1));
  }
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double t = 2.0 * M_PI * u2;
    spare_ = r * std::sin(t);
    have_spare_ = true;
    return r * std::cos(t);
  }
  Vec3 gaussian3() { return {gaussian(), gaussian(), gaussian()}; }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

inline double sq(double x) { return x * x; }

}  // namespace edgevio
