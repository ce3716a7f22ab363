#pragma once

#include <functional>

#include "cvtrack/model.hpp"
#include "cvtrack/rng.hpp"
#include "cvtrack/types.hpp"

namespace cvtrack::testing {

inline Vec2 random_velocity(RngStream& rng, double min_speed = 0.5,
                            double max_speed = 10.0) {
  const double speed = min_speed + (max_speed - min_speed) * rng.uniform();
  const double heading = 2.0 * M_PI * rng.uniform() - M_PI;
  return speed * Vec2(std::cos(heading), std::sin(heading));
}

inline ExtentState random_extent(RngStream& rng) {
  return {Vec2(0.3 + 4.7 * rng.uniform(), 0.3 + 4.7 * rng.uniform()),
          wrap_angle(2.0 * M_PI * rng.uniform() - M_PI)};
}

/// Central finite difference of a vector-valued function, step 1e-6.
template <int NOut, int NIn>
Eigen::Matrix<double, NOut, NIn> central_difference(
    const std::function<Eigen::Matrix<double, NOut, 1>(
        const Eigen::Matrix<double, NIn, 1>&)>& f,
    const Eigen::Matrix<double, NIn, 1>& at, double step = 1e-6) {
  Eigen::Matrix<double, NOut, NIn> jac;
  for (int i = 0; i < NIn; ++i) {
    Eigen::Matrix<double, NIn, 1> hi = at, lo = at;
    hi[i] += step;
    lo[i] -= step;
    jac.col(i) = (f(hi) - f(lo)) / (2.0 * step);
  }
  return jac;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

/// Relative agreement: max |a-b| over max(1, |b|_inf).
template <typename A, typename B>
double relative_error(const A& a, const B& b) {
  const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

}  // namespace cvtrack::testing
