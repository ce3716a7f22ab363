#pragma once

#include <optional>
#include <set>
#include <vector>

#include "cvtrack/model.hpp"
#include "cvtrack/rng.hpp"
#include "cvtrack/types.hpp"

namespace cvtrack {

struct SensorNode {
  int id = 0;
  Vec2 position = Vec2::Zero();
  double sensing_range = 0.0;
  Mat2 meas_cov = Mat2::Identity();
};

/// Undirected communication graph over the nodes. Symmetric boolean
/// adjacency with zero diagonal; connectivity is validated because average
/// consensus reaches the global mean only on connected graphs.
class Topology {
 public:
  Topology() = default;

  static Topology from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
    Topology t;
    t.adj_ = Eigen::MatrixXi::Zero(n, n);
    for (const auto& [a, b] : edges) {
      if (a < 0 || b < 0 || a >= n || b >= n || a == b) {
        throw ConfigError("invalid edge in topology");
      }
      t.adj_(a, b) = 1;
      t.adj_(b, a) = 1;
    }
    t.validate();
    return t;
  }

  /// Cycle 0-1-...-(n-1)-0; every node has degree 2.
  static Topology ring(int n) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
    return from_edges(n, edges);
  }

  static Topology full(int n) {
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
    return from_edges(n, edges);
  }

  int size() const { return static_cast<int>(adj_.rows()); }

  int degree(int s) const { return adj_.row(s).sum(); }

  int max_degree() const {
    int d = 0;
    for (int s = 0; s < size(); ++s) d = std::max(d, degree(s));
    return d;
  }

  std::vector<int> neighbors(int s) const {
    std::vector<int> out;
    for (int j = 0; j < size(); ++j)
      if (adj_(s, j) != 0) out.push_back(j);
    return out;
  }

  bool connected() const {
    const int n = size();
    if (n == 0) return false;
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    int count = 1;
    while (!stack.empty()) {
      const int s = stack.back();
      stack.pop_back();
      for (int j = 0; j < n; ++j) {
        if (adj_(s, j) != 0 && !seen[j]) {
          seen[j] = true;
          ++count;
          stack.push_back(j);
        }
      }
    }
    return count == n;
  }

  int diameter() const {
    const int n = size();
    Eigen::MatrixXi dist = Eigen::MatrixXi::Constant(n, n, n + 1);
    for (int s = 0; s < n; ++s) {
      dist(s, s) = 0;
      // BFS
      std::vector<int> frontier{s};
      int level = 0;
      while (!frontier.empty()) {
        ++level;
        std::vector<int> next;
        for (int u : frontier) {
          for (int j = 0; j < n; ++j) {
            if (adj_(u, j) != 0 && dist(s, j) > level) {
              dist(s, j) = level;
              next.push_back(j);
            }
          }
        }
        frontier = std::move(next);
      }
    }
    return dist.maxCoeff();
  }

  const Eigen::MatrixXi& adjacency() const { return adj_; }

  void validate() const {
    if (adj_.rows() != adj_.cols()) throw ConfigError("adjacency not square");
    if (!(adj_.transpose() == adj_)) throw ConfigError("adjacency not symmetric");
    if (adj_.diagonal().sum() != 0) throw ConfigError("adjacency has self-loops");
    if (!connected()) throw ConfigError("topology is not connected");
  }

 private:
  Eigen::MatrixXi adj_;
};

struct SensorNetwork {
  std::vector<SensorNode> nodes;
  Topology topology;

  int size() const { return static_cast<int>(nodes.size()); }
};

/// Ground-truth object state at one scan. The orientation is derived from
/// the velocity direction and the sideslip.
struct GroundTruthStep {
  KinematicState kin;
  ExtentState ext;
  double orientation = 0.0;
};

/// Closed-ball field-of-view test.
inline bool in_fov(const SensorNode& node, const Vec2& position) {
  return (position - node.position).norm() <= node.sensing_range;
}

inline std::set<int> detecting_nodes(const GroundTruthStep& truth,
                                     const SensorNetwork& network) {
  std::set<int> out;
  for (const auto& node : network.nodes) {
    if (in_fov(node, truth.kin.position)) out.insert(node.id);
  }
  return out;
}

/// Draws max(1, Poisson(lambda)) scattering-source measurements
/// y = H x + S h + v for a node whose FoV contains the object; empty
/// otherwise. h is uniform on [-1,1]^2 for rectangles (second moment I/3)
/// and uniform on the unit disk for ellipses (second moment I/4).
inline std::vector<Vec2> generate_measurements(const GroundTruthStep& truth,
                                               const SensorNode& node,
                                               ObjectShape shape,
                                               double lambda, RngStream& rng) {
  if (!in_fov(node, truth.kin.position)) return {};
  const int count = std::max(1, rng.poisson(lambda));
  const Mat2 s = coefficient_matrix(truth.kin.velocity, truth.ext);
  std::vector<Vec2> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const Vec2 h =
        shape == ObjectShape::rectangle ? rng.uniform_square() : rng.uniform_disk();
    const Vec2 v = rng.gaussian<2>(node.meas_cov);
    out.push_back(truth.kin.position + s * h + v);
  }
  return out;
}

/// Per-scan measurement sets, one vector per node (empty when the node does
/// not detect). Sequential filters consume them index by index; nodes whose
/// set is shorter than the index contribute nothing at that index.
struct MeasurementBatch {
  std::vector<std::vector<Vec2>> per_node;

  int sequential_count() const {
    std::size_t n = 0;
    for (const auto& m : per_node) n = std::max(n, m.size());
    return static_cast<int>(n);
  }

  /// Measurements at sequential index i (0-based), absent where a node has
  /// fewer than i+1 measurements.
  std::vector<std::optional<Vec2>> slice(int i) const {
    std::vector<std::optional<Vec2>> out(per_node.size());
    for (std::size_t s = 0; s < per_node.size(); ++s) {
      if (i >= 0 && static_cast<std::size_t>(i) < per_node[s].size()) {
        out[s] = per_node[s][i];
      }
    }
    return out;
  }
};

/// Generates the batch for one scan with one independent substream per node,
/// derived from (seed, scan index, node id); replay of any node is exact.
inline MeasurementBatch generate_batch(const GroundTruthStep& truth,
                                       const SensorNetwork& network,
                                       ObjectShape shape, double lambda,
                                       std::uint64_t seed, int scan_index) {
  MeasurementBatch batch;
  batch.per_node.resize(network.nodes.size());
  for (std::size_t s = 0; s < network.nodes.size(); ++s) {
    RngStream rng(derive_seed(seed, 0x6d65u, scan_index, network.nodes[s].id));
    batch.per_node[s] =
        generate_measurements(truth, network.nodes[s], shape, lambda, rng);
  }
  return batch;
}

}  // namespace cvtrack
