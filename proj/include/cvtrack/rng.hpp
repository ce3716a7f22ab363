#pragma once

#include <cstdint>
#include <random>

#include "cvtrack/types.hpp"

namespace cvtrack {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Derives an independent stream seed by XOR-hashing salts into a base seed.
/// Used for per-run, per-scan, and per-node streams so that replay of any
/// single stream is independent of everything else.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = base;
  s = splitmix64(s ^ splitmix64(a + 0x1));
  s = splitmix64(s ^ splitmix64(b + 0x9e37));
  s = splitmix64(s ^ splitmix64(c + 0x79b9));
  return s;
}

class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : engine_(seed) {}

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }

  int poisson(double lambda) {
    std::poisson_distribution<int> d(lambda);
    return d(engine_);
  }

  /// Zero-mean Gaussian vector with the given covariance (PSD allowed).
  template <int N>
  Eigen::Matrix<double, N, 1> gaussian(
      const Eigen::Matrix<double, N, N>& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, N, N>> es(
        symmetrize(cov));
    Eigen::Matrix<double, N, 1> z;
    for (int i = 0; i < N; ++i) {
      const double ev = es.eigenvalues()[i];
      z[i] = ev > 0.0 ? std::sqrt(ev) * normal() : 0.0;
    }
    return es.eigenvectors() * z;
  }

  /// Uniform on the square [-1, 1]^2; second moment (1/3) I.
  Vec2 uniform_square() {
    return Vec2(2.0 * uniform() - 1.0, 2.0 * uniform() - 1.0);
  }

  /// Uniform on the closed unit disk; second moment (1/4) I.
  Vec2 uniform_disk() {
    while (true) {
      const Vec2 p(2.0 * uniform() - 1.0, 2.0 * uniform() - 1.0);
      if (p.squaredNorm() <= 1.0) return p;
    }
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace cvtrack
