#pragma once

// Central finite differences, used as the reference for analytic gradients.

#include <algorithm>
#include <cmath>
#include <functional>

#include "msdgr/tensor.hpp"

namespace msdgr::testing {

inline constexpr double kFdStep = 1e-4;

// d objective / d param, perturbing each entry of `param` in place.
template <class M>
M numeric_gradient(M& param, const std::function<double()>& objective, double h = kFdStep) {
  M grad = M::Zero(param.rows(), param.cols());
  for (Eigen::Index k = 0; k < param.size(); ++k) {
    const double saved = param.data()[k];
    param.data()[k] = saved + h;
    const double up = objective();
    param.data()[k] = saved - h;
    const double down = objective();
    param.data()[k] = saved;
    grad.data()[k] = (up - down) / (2 * h);
  }
  return grad;
}

// ||a - n|| / max(||a||, ||n||), zero when both vanish.
template <class A, class B>
double relative_error(const A& analytic, const B& numeric) {
  const double scale = std::max(analytic.norm(), numeric.norm());
  if (scale < 1e-12) return 0.0;
  return (analytic - numeric).norm() / scale;
}

// Scalar objective <Y, R> for a fixed random upstream R.
inline double contract(const Matrix& y, const Matrix& r) { return y.cwiseProduct(r).sum(); }

}  // namespace msdgr::testing
