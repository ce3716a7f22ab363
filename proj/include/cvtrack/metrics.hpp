#pragma once

#include <vector>

#include "cvtrack/network.hpp"
#include "cvtrack/types.hpp"

namespace cvtrack {

/// Gaussian summary of an elliptic extent: center plus the SPD shape matrix
/// R(alpha) diag(l1^2, l2^2) R(alpha)^T.
struct EllipticExtentSummary {
  Vec2 center = Vec2::Zero();
  Mat2 shape_matrix = Mat2::Identity();
};

/// Geometric object summary used for boundary sampling.
struct ObjectSummary {
  Vec2 center = Vec2::Zero();
  Vec2 semi_lengths = Vec2::Ones();
  double orientation = 0.0;
  ObjectShape shape = ObjectShape::ellipse;
};

inline Mat2 rotation(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

inline EllipticExtentSummary make_summary(const Vec2& center,
                                          const Vec2& semi_lengths,
                                          double orientation) {
  const Mat2 r = rotation(orientation);
  const Mat2 d = semi_lengths.cwiseProduct(semi_lengths).asDiagonal();
  return {center, symmetrize(r * d * r.transpose())};
}

/// Orientation recovered from a kinematic and extent estimate pair:
/// alpha = atan2(vy, vx) - beta.
inline double orientation_from_estimates(const Vec4& kin_mean, const Vec3& ext_mean) {
  return wrap_angle(std::atan2(kin_mean[3], kin_mean[2]) - ext_mean[2]);
}

/// Raw estimates can carry transiently non-positive semi-lengths; summaries
/// floor them so the metric inputs stay valid.
inline Vec2 floored_semi_lengths(const Vec3& ext_mean) {
  return ext_mean.head<2>().cwiseAbs().cwiseMax(1e-3);
}

inline EllipticExtentSummary summary_from_estimates(const Vec4& kin_mean,
                                                    const Vec3& ext_mean) {
  return make_summary(kin_mean.head<2>(), floored_semi_lengths(ext_mean),
                      orientation_from_estimates(kin_mean, ext_mean));
}

inline ObjectSummary object_from_truth(const GroundTruthStep& truth, ObjectShape shape) {
  return {truth.kin.position, truth.ext.semi_lengths, truth.orientation, shape};
}

inline ObjectSummary object_from_estimates(const Vec4& kin_mean, const Vec3& ext_mean,
                                           ObjectShape shape) {
  return {kin_mean.head<2>(), floored_semi_lengths(ext_mean),
          orientation_from_estimates(kin_mean, ext_mean), shape};
}

namespace detail {

inline Mat2 spd_sqrt(const Mat2& m) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(symmetrize(m));
  Vec2 ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return symmetrize(es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose());
}

inline void require_spd(const Mat2& m, const char* what) {
  Eigen::SelfAdjointEigenSolver<Mat2> es(symmetrize(m));
  if (es.eigenvalues().minCoeff() <= 0.0) {
    throw ValidationError(std::string(what) + " must be positive definite");
  }
}

/// Minimal-cost perfect matching on a square cost matrix
/// (shortest augmenting path, O(n^3)).
inline double solve_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0.0;
  for (int j = 1; j <= n; ++j) total += cost(p[j] - 1, j - 1);
  return total;
}

}  // namespace detail

/// Gaussian Wasserstein distance between elliptic summaries:
/// sqrt(|ca - cb|^2 + tr(A + B - 2 (A^1/2 B A^1/2)^1/2)).
inline double gwd(const EllipticExtentSummary& a, const EllipticExtentSummary& b) {
  detail::require_spd(a.shape_matrix, "shape matrix");
  detail::require_spd(b.shape_matrix, "shape matrix");
  const Mat2 ra = detail::spd_sqrt(a.shape_matrix);
  const Mat2 cross = detail::spd_sqrt(ra * b.shape_matrix * ra);
  const double tr =
      (a.shape_matrix + b.shape_matrix - 2.0 * cross).trace();
  const double d2 = (a.center - b.center).squaredNorm() + std::max(0.0, tr);
  return std::sqrt(d2);
}

/// N deterministic boundary points at uniform parameter spacing.
inline std::vector<Vec2> boundary_points(const ObjectSummary& object, int count) {
  const Mat2 r = rotation(object.orientation);
  const double l1 = object.semi_lengths.x();
  const double l2 = object.semi_lengths.y();
  std::vector<Vec2> out;
  out.reserve(count);
  if (object.shape == ObjectShape::ellipse) {
    for (int i = 0; i < count; ++i) {
      const double t = 2.0 * M_PI * i / count;
      out.push_back(object.center + r * Vec2(l1 * std::cos(t), l2 * std::sin(t)));
    }
    return out;
  }
  // Rectangle: march the perimeter counterclockwise from (+l1, +l2).
  const Vec2 corners[4] = {Vec2(l1, l2), Vec2(-l1, l2), Vec2(-l1, -l2), Vec2(l1, -l2)};
  const double perimeter = 4.0 * (l1 + l2);
  for (int i = 0; i < count; ++i) {
    double s = perimeter * i / count;
    Vec2 local = corners[0];
    for (int e = 0; e < 4; ++e) {
      const Vec2 a = corners[e];
      const Vec2 b = corners[(e + 1) % 4];
      const double len = (b - a).norm();
      if (s <= len || e == 3) {
        local = a + (b - a) * (len > 0.0 ? std::min(s, len) / len : 0.0);
        break;
      }
      s -= len;
    }
    out.push_back(object.center + r * local);
  }
  return out;
}

inline constexpr int kOspaBoundaryPoints = 20;
inline constexpr double kOspaCutoff = 10.0;
inline constexpr double kOspaOrder = 2.0;

/// OSPA distance between two objects realized over equal-cardinality
/// deterministic boundary samples with cutoff c and order p.
inline double ospa(const ObjectSummary& estimate, const ObjectSummary& truth,
                   double cutoff = kOspaCutoff, double order = kOspaOrder,
                   int count = kOspaBoundaryPoints) {
  if (cutoff <= 0.0) throw ValidationError("ospa cutoff must be positive");
  if (order < 1.0) throw ValidationError("ospa order must be >= 1");
  const std::vector<Vec2> a = boundary_points(estimate, count);
  const std::vector<Vec2> b = boundary_points(truth, count);
  Eigen::MatrixXd cost(count, count);
  for (int i = 0; i < count; ++i) {
    for (int j = 0; j < count; ++j) {
      cost(i, j) = std::pow(std::min((a[i] - b[j]).norm(), cutoff), order);
    }
  }
  return std::pow(detail::solve_assignment(cost) / count, 1.0 / order);
}

/// Averaged consensus estimate error: mean distance of the node estimates
/// from their across-node mean.
inline double acee(const std::vector<Eigen::VectorXd>& node_estimates) {
  if (node_estimates.size() < 2) {
    throw ValidationError("acee needs at least two nodes");
  }
  Eigen::VectorXd mean = node_estimates[0];
  for (std::size_t s = 1; s < node_estimates.size(); ++s) {
    if (node_estimates[s].size() != mean.size()) {
      throw ValidationError("acee estimates must share a dimension");
    }
    mean += node_estimates[s];
  }
  mean /= static_cast<double>(node_estimates.size());
  double total = 0.0;
  for (const auto& x : node_estimates) total += (x - mean).norm();
  return total / static_cast<double>(node_estimates.size());
}

/// Normalized estimation error squared of an information estimate.
template <int N>
double nees(const InfoEstimate<N>& estimate, const Eigen::Matrix<double, N, 1>& truth) {
  const Eigen::Matrix<double, N, 1> e = estimate.mean - truth;
  return e.dot(estimate.info * e);
}

}  // namespace cvtrack
