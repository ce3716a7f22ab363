#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace cvtrack {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat34 = Eigen::Matrix<double, 3, 4>;

/// Linearization points with a speed below this are rejected.
inline constexpr double kMinSpeed = 1e-6;

/// Eigenvalue floor applied when repairing nearly-PSD covariances.
inline constexpr double kPsdFloor = 1e-12;

/// Relative indefiniteness beyond which a covariance is considered broken
/// rather than merely rounded.
inline constexpr double kIndefiniteTol = 1e-2;

struct DegenerateInputError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct ConditioningError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ValidationError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  double r = std::fmod(a + M_PI, 2.0 * M_PI);
  if (r <= 0.0) r += 2.0 * M_PI;
  return r - M_PI;
}

template <typename Derived>
auto symmetrize(const Eigen::MatrixBase<Derived>& m) {
  return (0.5 * (m + m.transpose())).eval();
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
/// Throws ConditioningError if the factorization fails.
template <int N>
Eigen::Matrix<double, N, N> spd_inverse(const Eigen::Matrix<double, N, N>& m) {
  const Eigen::Matrix<double, N, N> s = symmetrize(m);
  Eigen::LLT<Eigen::Matrix<double, N, N>> llt(s);
  if (llt.info() != Eigen::Success) {
    throw ConditioningError("matrix is not positive definite");
  }
  Eigen::Matrix<double, N, N> inv =
      llt.solve(Eigen::Matrix<double, N, N>::Identity());
  return symmetrize(inv);
}

/// Symmetrizes and clamps eigenvalues below `floor` up to `floor`.
/// Eigenvalues more negative than kIndefiniteTol * max(1, lambda_max)
/// indicate a broken covariance and raise ConditioningError.
template <int N>
Eigen::Matrix<double, N, N> floor_spd(const Eigen::Matrix<double, N, N>& m,
                                      double floor = kPsdFloor) {
  const Eigen::Matrix<double, N, N> s = symmetrize(m);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(s);
  Eigen::Matrix<double, N, 1> ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -kIndefiniteTol * scale) {
    throw ConditioningError("covariance indefinite beyond floor tolerance");
  }
  if (ev.minCoeff() >= floor) return s;
  for (int i = 0; i < N; ++i) ev[i] = std::max(ev[i], floor);
  return symmetrize((es.eigenvectors() * ev.asDiagonal() *
                     es.eigenvectors().transpose())
                        .eval());
}

/// Centroid position and velocity; stacked as [px, py, vx, vy].
struct KinematicState {
  Vec2 position = Vec2::Zero();
  Vec2 velocity = Vec2::Zero();

  Vec4 to_vector() const {
    Vec4 x;
    x << position, velocity;
    return x;
  }
  static KinematicState from_vector(const Vec4& x) {
    return {x.head<2>(), x.tail<2>()};
  }
};

/// Semi-lengths (l1, l2) and sideslip angle beta, the drift between the
/// body orientation and the velocity direction.
struct ExtentState {
  Vec2 semi_lengths = Vec2::Ones();
  double sideslip = 0.0;

  Vec3 to_vector() const {
    return Vec3(semi_lengths.x(), semi_lengths.y(), wrap_angle(sideslip));
  }
  static ExtentState from_vector(const Vec3& p) {
    return {Vec2(p[0], p[1]), wrap_angle(p[2])};
  }
};

/// Multiplicative scattering noise covariance plus per-node measurement
/// noise covariances, indexed by node id.
struct NoiseModel {
  Mat2 mult_cov = Mat2::Identity();
  std::vector<Mat2> meas_cov_per_node;
};

struct DynamicsModel {
  Mat4 kin_transition = Mat4::Identity();
  Mat3 ext_transition = Mat3::Identity();
  Mat4 kin_proc_cov = Mat4::Zero();
  Mat3 ext_proc_cov = Mat3::Zero();
  double scan_period = 1.0;
};

/// Nearly-constant-velocity transition matrix for [px, py, vx, vy].
inline Mat4 ncv_transition(double period) {
  Mat4 phi = Mat4::Identity();
  phi(0, 2) = period;
  phi(1, 3) = period;
  return phi;
}

/// A mean together with its information matrix (inverse covariance), the
/// currency of all filter updates.
template <int N>
struct InfoEstimate {
  Eigen::Matrix<double, N, 1> mean = Eigen::Matrix<double, N, 1>::Zero();
  Eigen::Matrix<double, N, N> info = Eigen::Matrix<double, N, N>::Identity();

  Eigen::Matrix<double, N, N> covariance() const { return spd_inverse<N>(info); }

  static InfoEstimate from_moments(const Eigen::Matrix<double, N, 1>& mean,
                                   const Eigen::Matrix<double, N, N>& cov) {
    return {mean, spd_inverse<N>(cov)};
  }
};

using KinEstimate = InfoEstimate<4>;
using ExtEstimate = InfoEstimate<3>;

enum class ObjectShape { rectangle, ellipse };

/// Position selector H = [I2 0] applied to a kinematic vector.
inline Vec2 position_of(const Vec4& x) { return x.head<2>(); }

inline Mat2 position_block(const Mat4& kin_cov) {
  return kin_cov.block<2, 2>(0, 0);
}

inline Mat2 velocity_block(const Mat4& kin_cov) {
  return kin_cov.block<2, 2>(2, 2);
}

}  // namespace cvtrack
