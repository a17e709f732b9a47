#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "flowsynth/autodiff.hpp"

namespace testing_support {

using flowsynth::ad::Tensor;

inline Tensor random_tensor(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
  return t;
}

/// Central differences of a scalar function over every entry of `x`.
inline Tensor numeric_gradient(const std::function<double(const Tensor&)>& f, Tensor x, double step = 1e-4) {
  Tensor g(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + step;
    const double up = f(x);
    x.data()[i] = keep - step;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2.0 * step);
  }
  return g;
}

/// ||a - b|| / max(||a||, ||b||, floor)
inline double relative_error(const Tensor& a, const Tensor& b, double floor = 1e-8) {
  const double scale = std::max({a.norm(), b.norm(), floor});
  return (a - b).norm() / scale;
}

}  // namespace testing_support
