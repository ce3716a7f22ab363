#pragma once

#include <utility>

#include "cvtrack/types.hpp"

namespace cvtrack {

/// Selector matrices mapping the 2-fold Kronecker square of a residual onto
/// the pseudo-measurement components (r1^2, r2^2, r1 r2).
struct KroneckerSelectors {
  static Mat34 f() {
    Mat34 m;
    m << 1, 0, 0, 0,
         0, 0, 0, 1,
         0, 1, 0, 0;
    return m;
  }
  static Mat34 f_tilde() {
    Mat34 m;
    m << 1, 0, 0, 0,
         0, 0, 0, 1,
         0, 0, 1, 0;
    return m;
  }
};

struct VelocityPartials {
  double d1;  // d(vx/|v|)/dvx
  double d2;  // d(vy/|v|)/dvy
  double d3;  // d(vy/|v|)/dvx = d(vx/|v|)/dvy
};

namespace detail {

inline void require_speed(const Vec2& velocity) {
  if (velocity.norm() < kMinSpeed) {
    throw DegenerateInputError("velocity norm below minimum for linearization");
  }
}

/// cos/sin of the orientation alpha = atan2(vy, vx) - beta, in the rational
/// form that avoids evaluating the angle itself.
inline Vec2 orientation_cos_sin(const Vec2& velocity, double sideslip) {
  const double n = velocity.norm();
  const double cb = std::cos(sideslip);
  const double sb = std::sin(sideslip);
  const double ca = (velocity.x() * cb + velocity.y() * sb) / n;
  const double sa = (velocity.y() * cb - velocity.x() * sb) / n;
  return Vec2(ca, sa);
}

inline Mat4 kron2(const Mat2& a, const Mat2& b) {
  Mat4 k;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      k.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return k;
}

inline Vec4 vect(const Mat2& c) {
  Vec4 v;
  v << c(0, 0), c(1, 0), c(0, 1), c(1, 1);
  return v;
}

}  // namespace detail

/// Coefficient matrix S = R(alpha) diag(l1, l2) compacting the kinematics
/// and extent; alpha = atan2(vy, vx) - beta.
inline Mat2 coefficient_matrix(const Vec2& velocity, const ExtentState& extent) {
  detail::require_speed(velocity);
  const Vec2 cs = detail::orientation_cos_sin(velocity, extent.sideslip);
  const double l1 = extent.semi_lengths.x();
  const double l2 = extent.semi_lengths.y();
  Mat2 s;
  s << l1 * cs.x(), -l2 * cs.y(),
       l1 * cs.y(),  l2 * cs.x();
  return s;
}

/// Partial derivatives of vx/|v| and vy/|v| with respect to the velocity
/// components, evaluated at the given velocity.
inline VelocityPartials velocity_partials(const Vec2& velocity) {
  detail::require_speed(velocity);
  const double n = velocity.norm();
  const double n3 = n * n * n;
  return {1.0 / n - velocity.x() * velocity.x() / n3,
          1.0 / n - velocity.y() * velocity.y() / n3,
          -velocity.x() * velocity.y() / n3};
}

/// Jacobians of the two rows of S with respect to the extent (l1, l2, beta).
inline std::pair<Mat23, Mat23> jacobians_extent(const Vec2& velocity,
                                                const ExtentState& extent) {
  detail::require_speed(velocity);
  const Vec2 cs = detail::orientation_cos_sin(velocity, extent.sideslip);
  const double ca = cs.x(), sa = cs.y();
  const double l1 = extent.semi_lengths.x();
  const double l2 = extent.semi_lengths.y();
  Mat23 j1, j2;
  j1 << ca, 0.0, l1 * sa,
        0.0, -sa, l2 * ca;
  j2 << sa, 0.0, -l1 * ca,
        0.0, ca, l2 * sa;
  return {j1, j2};
}

/// Jacobians of the two rows of S with respect to the velocity (vx, vy).
inline std::pair<Mat2, Mat2> jacobians_velocity(const Vec2& velocity,
                                                const ExtentState& extent) {
  detail::require_speed(velocity);
  const VelocityPartials d = velocity_partials(velocity);
  const double cb = std::cos(extent.sideslip);
  const double sb = std::sin(extent.sideslip);
  const double l1 = extent.semi_lengths.x();
  const double l2 = extent.semi_lengths.y();
  Mat2 j1, j2;
  j1 << l1 * (d.d3 * sb + d.d1 * cb), l1 * (d.d2 * sb + d.d3 * cb),
        l2 * (d.d1 * sb - d.d3 * cb), l2 * (d.d3 * sb - d.d2 * cb);
  j2 << l1 * (d.d3 * cb - d.d1 * sb), l1 * (d.d2 * cb - d.d3 * sb),
        l2 * (d.d3 * sb + d.d1 * cb), l2 * (d.d2 * sb + d.d3 * cb);
  return {j1, j2};
}

/// Node-independent pieces of the equivalent-noise construction at one
/// linearization point. Shared by the measurement-model operations below so
/// a filter evaluates the Jacobians once per sequential index.
struct EquivalentNoiseTerms {
  Mat2 induced;   // S Ch S^T + trace terms (extent and velocity spread)
  Mat2 pos_cov;   // position block of the prior kinematic covariance
  Mat3 pseudo_matrix;
  Mat3 ext_cov;
  Vec3 ext_mean;
};

inline EquivalentNoiseTerms compute_equivalent_noise_terms(
    const KinEstimate& prior_kin, const ExtEstimate& prior_ext,
    const Mat2& mult_cov) {
  const Vec2 vel = prior_kin.mean.tail<2>();
  const ExtentState ext = ExtentState::from_vector(prior_ext.mean);
  const Mat2 s = coefficient_matrix(vel, ext);
  const auto [j1p, j2p] = jacobians_extent(vel, ext);
  const auto [j1v, j2v] = jacobians_velocity(vel, ext);

  const Mat4 kin_cov = prior_kin.covariance();
  const Mat3 ext_cov = prior_ext.covariance();
  const Mat2 vel_cov = velocity_block(kin_cov);

  const Mat2 c1 = s * mult_cov * s.transpose();
  Mat2 c2, c3;
  const Mat23 jp[2] = {j1p, j2p};
  const Mat2 jv[2] = {j1v, j2v};
  for (int m = 0; m < 2; ++m) {
    for (int n = 0; n < 2; ++n) {
      c2(m, n) = (ext_cov * jp[n].transpose() * mult_cov * jp[m]).trace();
      c3(m, n) = (vel_cov * jv[n].transpose() * mult_cov * jv[m]).trace();
    }
  }

  Mat3 m;
  const Eigen::RowVector2d s1 = s.row(0);
  const Eigen::RowVector2d s2 = s.row(1);
  m.row(0) = 2.0 * s1 * mult_cov * j1p;
  m.row(1) = 2.0 * s2 * mult_cov * j2p;
  m.row(2) = s1 * mult_cov * j2p + s2 * mult_cov * j1p;

  return {symmetrize(c1 + c2 + c3), position_block(kin_cov), m, ext_cov,
          prior_ext.mean};
}

/// Equivalent additive-noise covariance R^x of the pseudo-linearized
/// kinematic measurement model: the multiplicative-noise term, the spread
/// induced by extent and velocity uncertainty, plus the sensor noise.
inline Mat2 kinematic_noise_moments(const KinEstimate& prior_kin,
                                    const ExtEstimate& prior_ext,
                                    const NoiseModel& noise, int node) {
  const EquivalentNoiseTerms t =
      compute_equivalent_noise_terms(prior_kin, prior_ext, noise.mult_cov);
  return floor_spd<2>(t.induced + noise.meas_cov_per_node.at(node), 0.0);
}

/// Residual covariance C^y of y - H x_hat: prior position covariance plus
/// the equivalent noise covariance.
inline Mat2 measurement_residual_cov(const KinEstimate& prior_kin,
                                     const Mat2& equivalent_noise_cov) {
  return symmetrize(position_block(prior_kin.covariance()) +
                    equivalent_noise_cov);
}

/// Pseudo-measurement F ((y - H x_hat) kron (y - H x_hat)).
inline Vec3 pseudo_measurement(const Vec2& y, const Vec4& x_hat) {
  const Vec2 r = y - position_of(x_hat);
  return Vec3(r.x() * r.x(), r.y() * r.y(), r.x() * r.y());
}

/// Covariance F (Cy kron Cy) (F + F~)^T of the pseudo-measurement under a
/// Gaussian residual with covariance Cy.
inline Mat3 pseudo_measurement_cov(const Mat2& residual_cov) {
  const Mat34 f = KroneckerSelectors::f();
  const Mat34 ft = KroneckerSelectors::f_tilde();
  return f * detail::kron2(residual_cov, residual_cov) * (f + ft).transpose();
}

/// Pseudo-measurement matrix M whose rows couple the extent into the
/// expectation of the Kronecker pseudo-measurement.
inline Mat3 pseudo_measurement_matrix(const KinEstimate& prior_kin,
                                      const ExtEstimate& prior_ext,
                                      const Mat2& mult_cov) {
  return compute_equivalent_noise_terms(prior_kin, prior_ext, mult_cov)
      .pseudo_matrix;
}

struct PseudoNoiseMoments {
  Vec3 mean;
  Mat3 cov;
};

/// First two moments of the equivalent noise of the pseudo-linearized extent
/// model. The covariance subtraction can go indefinite through rounding, so
/// the result is symmetrized and eigenvalue-floored.
inline PseudoNoiseMoments pseudo_noise_moments(const Mat3& pseudo_matrix,
                                               const ExtEstimate& prior_ext,
                                               const Mat2& residual_cov) {
  const Vec3 mean = KroneckerSelectors::f() * detail::vect(residual_cov) -
                    pseudo_matrix * prior_ext.mean;
  const Mat3 raw = pseudo_measurement_cov(residual_cov) -
                   pseudo_matrix * prior_ext.covariance() *
                       pseudo_matrix.transpose();
  return {mean, floor_spd<3>(raw)};
}

}  // namespace cvtrack
