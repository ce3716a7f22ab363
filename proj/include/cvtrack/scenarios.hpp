#pragma once

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

#include "cvtrack/filter_central.hpp"
#include "cvtrack/filter_distributed.hpp"
#include "cvtrack/network.hpp"
#include "cvtrack/rng.hpp"
#include "cvtrack/types.hpp"

namespace cvtrack {

/// How the sideslip evolves along the trajectory: either the body stays
/// aligned with the velocity (beta = 0) or the body orientation is held
/// constant while the velocity direction varies.
enum class SideslipProfile { aligned, constant_orientation };

/// Piecewise-linear waypoint path with circular fillets of corner_radius at
/// interior corners, traversed at constant speed.
struct TrajectorySpec {
  std::vector<Vec2> waypoints;
  double speed = 1.0;
  double corner_radius = 0.0;
  SideslipProfile profile = SideslipProfile::aligned;
  double orientation = 0.0;  // body orientation for constant_orientation
};

struct PriorInitPolicy {
  enum class Mode { equal, uncorrelated_unequal, correlated_unequal };
  Mode mode = Mode::equal;
  double rho = 0.0;  // cross-node correlation for correlated_unequal
};

struct ScenarioConfig {
  std::string name;
  DynamicsModel dynamics;
  Mat2 mult_cov = Mat2::Identity();
  SensorNetwork network;
  ObjectShape shape = ObjectShape::rectangle;
  Vec2 true_semi_lengths = Vec2::Ones();
  TrajectorySpec trajectory;
  int scan_count = 1;
  double lambda = 1.0;
  ConsensusConfig consensus;
  PriorInitPolicy prior_policy;
  Mat4 node_kin_prior_cov = Mat4::Identity();
  Mat3 node_ext_prior_cov = Mat3::Identity();
  Mat4 central_kin_prior_cov = Mat4::Identity();
  Mat3 central_ext_prior_cov = Mat3::Identity();
  int monte_carlo_runs = 1;
};

inline NoiseModel noise_model(const ScenarioConfig& config) {
  NoiseModel n;
  n.mult_cov = config.mult_cov;
  for (const auto& node : config.network.nodes) n.meas_cov_per_node.push_back(node.meas_cov);
  return n;
}

inline FilterModels filter_models(const ScenarioConfig& config) {
  return {noise_model(config), config.dynamics};
}

namespace detail {

struct PathSegment {
  bool is_arc = false;
  // line
  Vec2 start = Vec2::Zero();
  Vec2 dir = Vec2::Zero();
  // arc
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
  double angle0 = 0.0;
  double sweep = 0.0;  // signed
  double length = 0.0;
};

/// Expands waypoints + corner radius into line and arc segments.
inline std::vector<PathSegment> build_path(const TrajectorySpec& spec) {
  const auto& w = spec.waypoints;
  if (w.size() < 2) throw ConfigError("trajectory needs at least two waypoints");
  const int n = static_cast<int>(w.size());

  // Tangent trim at each interior corner.
  std::vector<double> trim(n, 0.0);
  std::vector<double> turn(n, 0.0);
  for (int i = 1; i + 1 < n; ++i) {
    const Vec2 u = (w[i] - w[i - 1]).normalized();
    const Vec2 v = (w[i + 1] - w[i]).normalized();
    const double cross = u.x() * v.y() - u.y() * v.x();
    const double dot = std::clamp(u.dot(v), -1.0, 1.0);
    turn[i] = std::atan2(cross, dot);
    if (spec.corner_radius > 0.0 && std::abs(turn[i]) > 1e-12) {
      trim[i] = spec.corner_radius * std::tan(std::abs(turn[i]) / 2.0);
    }
  }
  for (int i = 0; i + 1 < n; ++i) {
    const double len = (w[i + 1] - w[i]).norm();
    if (trim[i] + trim[i + 1] > len + 1e-9) {
      throw ConfigError("corner radius too large for waypoint spacing");
    }
  }

  std::vector<PathSegment> segs;
  for (int i = 0; i + 1 < n; ++i) {
    const Vec2 u = (w[i + 1] - w[i]).normalized();
    const Vec2 a = w[i] + u * trim[i];
    const Vec2 b = w[i + 1] - u * trim[i + 1];
    PathSegment line;
    line.is_arc = false;
    line.start = a;
    line.dir = u;
    line.length = (b - a).norm();
    segs.push_back(line);

    if (i + 2 < n && trim[i + 1] > 0.0) {
      const double sgn = turn[i + 1] >= 0.0 ? 1.0 : -1.0;
      const Vec2 left(-u.y(), u.x());
      PathSegment arc;
      arc.is_arc = true;
      arc.radius = spec.corner_radius;
      arc.center = b + sgn * spec.corner_radius * left;
      const Vec2 r0 = b - arc.center;
      arc.angle0 = std::atan2(r0.y(), r0.x());
      arc.sweep = turn[i + 1];
      arc.length = spec.corner_radius * std::abs(turn[i + 1]);
      segs.push_back(arc);
    }
  }
  return segs;
}

inline double path_length(const std::vector<PathSegment>& segs) {
  double total = 0.0;
  for (const auto& s : segs) total += s.length;
  return total;
}

inline Vec2 path_position(const std::vector<PathSegment>& segs, double s) {
  double remaining = s;
  for (const auto& seg : segs) {
    if (remaining <= seg.length) {
      if (!seg.is_arc) return seg.start + seg.dir * remaining;
      const double ang =
          seg.angle0 + seg.sweep * (seg.length > 0.0 ? remaining / seg.length : 0.0);
      return seg.center + seg.radius * Vec2(std::cos(ang), std::sin(ang));
    }
    remaining -= seg.length;
  }
  // Past the end: extrapolate along the final direction.
  const auto& last = segs.back();
  if (!last.is_arc) return last.start + last.dir * (last.length + remaining);
  const double ang = last.angle0 + last.sweep;
  const Vec2 end = last.center + last.radius * Vec2(std::cos(ang), std::sin(ang));
  const Vec2 dir(-std::sin(ang) * (last.sweep >= 0 ? 1.0 : -1.0),
                 std::cos(ang) * (last.sweep >= 0 ? 1.0 : -1.0));
  return end + dir * remaining;
}

}  // namespace detail

/// Samples the ground-truth trajectory at the scan times. Position comes
/// from the constant-speed path, velocity from forward differences, and the
/// sideslip from the scenario's profile.
inline std::vector<GroundTruthStep> build_truth(const ScenarioConfig& config) {
  const auto& traj = config.trajectory;
  if (traj.speed <= 0.0) throw ConfigError("trajectory speed must be positive");
  const double step = traj.speed * config.dynamics.scan_period;
  for (std::size_t i = 0; i + 1 < traj.waypoints.size(); ++i) {
    if ((traj.waypoints[i + 1] - traj.waypoints[i]).norm() < step) {
      throw ConfigError("waypoints closer than one scan step");
    }
  }
  const auto segs = detail::build_path(traj);
  const double needed = step * (config.scan_count - 1);
  if (detail::path_length(segs) + 1e-9 < needed) {
    throw ConfigError("trajectory shorter than the scan horizon");
  }

  std::vector<Vec2> pos(config.scan_count + 1);
  for (int k = 0; k <= config.scan_count; ++k) {
    pos[k] = detail::path_position(segs, step * k);
  }
  std::vector<GroundTruthStep> truth(config.scan_count);
  for (int k = 0; k < config.scan_count; ++k) {
    const Vec2 vel = (pos[k + 1] - pos[k]) / config.dynamics.scan_period;
    const double heading = std::atan2(vel.y(), vel.x());
    double beta = 0.0;
    if (traj.profile == SideslipProfile::constant_orientation) {
      beta = wrap_angle(heading - traj.orientation);
    }
    truth[k].kin = {pos[k], vel};
    truth[k].ext = {config.true_semi_lengths, beta};
    truth[k].orientation = wrap_angle(heading - beta);
  }
  return truth;
}

/// Per-run prior draw: the filters are initialized at the truth perturbed by
/// a sample from the prior covariance, so initialization is consistent with
/// the claimed information matrices.
struct PriorDraw {
  KinEstimate central_kin;
  ExtEstimate central_ext;
  std::vector<KinEstimate> node_kin;
  std::vector<ExtEstimate> node_ext;
};

inline PriorDraw sample_priors(const ScenarioConfig& config,
                               const GroundTruthStep& truth0,
                               std::uint64_t run_seed) {
  const int n = config.network.size();
  const Vec4 x0 = truth0.kin.to_vector();
  const Vec3 p0 = truth0.ext.to_vector();
  PriorDraw draw;
  draw.node_kin.resize(n);
  draw.node_ext.resize(n);

  using Mode = PriorInitPolicy::Mode;
  const Mode mode = config.prior_policy.mode;

  // Semi-length prior means are kept physically valid; the clamp only acts
  // on draws beyond roughly -2.4 sigma.
  const auto clamp_semi = [](Vec3 p) {
    p[0] = std::max(p[0], 0.05);
    p[1] = std::max(p[1], 0.05);
    return p;
  };

  if (mode == Mode::equal) {
    RngStream rng(derive_seed(run_seed, 0x7072u, 0));
    const Vec4 dx = rng.gaussian<4>(config.node_kin_prior_cov);
    const Vec3 dp = rng.gaussian<3>(config.node_ext_prior_cov);
    const KinEstimate kin =
        KinEstimate::from_moments(x0 + dx, config.node_kin_prior_cov);
    const ExtEstimate ext = ExtEstimate::from_moments(
        clamp_semi(p0 + dp), config.node_ext_prior_cov);
    for (int s = 0; s < n; ++s) {
      draw.node_kin[s] = kin;
      draw.node_ext[s] = ext;
    }
    draw.central_kin = kin;
    draw.central_ext = ext;
    return draw;
  }

  // Unequal modes: per-node covariances are the base diagonals scaled by
  // uniform(0,1) draws; means are truth plus a sample from that covariance.
  const double rho =
      mode == Mode::correlated_unequal ? config.prior_policy.rho : 0.0;
  RngStream shared(derive_seed(run_seed, 0x7072u, 0xffff));
  Vec4 g_kin;
  Vec3 g_ext;
  for (int d = 0; d < 4; ++d) g_kin[d] = shared.normal();
  for (int d = 0; d < 3; ++d) g_ext[d] = shared.normal();

  for (int s = 0; s < n; ++s) {
    RngStream rng(derive_seed(run_seed, 0x7072u, s + 1));
    Vec4 kin_scale;
    Vec3 ext_scale;
    // Floor keeps the scaled covariances invertible.
    for (int d = 0; d < 4; ++d) kin_scale[d] = std::max(rng.uniform(), 1e-6);
    for (int d = 0; d < 3; ++d) ext_scale[d] = std::max(rng.uniform(), 1e-6);
    const Mat4 ck =
        (config.node_kin_prior_cov.diagonal().cwiseProduct(kin_scale))
            .asDiagonal();
    const Mat3 ce =
        (config.node_ext_prior_cov.diagonal().cwiseProduct(ext_scale))
            .asDiagonal();
    Vec4 dx;
    Vec3 dp;
    for (int d = 0; d < 4; ++d) {
      dx[d] = std::sqrt(ck(d, d)) * (std::sqrt(rho) * g_kin[d] +
                                     std::sqrt(1.0 - rho) * rng.normal());
    }
    for (int d = 0; d < 3; ++d) {
      dp[d] = std::sqrt(ce(d, d)) * (std::sqrt(rho) * g_ext[d] +
                                     std::sqrt(1.0 - rho) * rng.normal());
    }
    draw.node_kin[s] = KinEstimate::from_moments(x0 + dx, ck);
    draw.node_ext[s] = ExtEstimate::from_moments(clamp_semi(p0 + dp), ce);
  }

  RngStream central(derive_seed(run_seed, 0x7072u, 0xfffe));
  draw.central_kin = KinEstimate::from_moments(
      x0 + central.gaussian<4>(config.central_kin_prior_cov),
      config.central_kin_prior_cov);
  draw.central_ext = ExtEstimate::from_moments(
      clamp_semi(p0 + central.gaussian<3>(config.central_ext_prior_cov)),
      config.central_ext_prior_cov);
  return draw;
}

inline void validate(const ScenarioConfig& config) {
  if (config.scan_count < 1) throw ConfigError("scan_count must be >= 1");
  if (config.lambda <= 0.0) throw ConfigError("lambda must be positive");
  if (config.monte_carlo_runs < 1) throw ConfigError("monte_carlo_runs must be >= 1");
  if (config.true_semi_lengths.minCoeff() <= 0.0) {
    throw ConfigError("semi-lengths must be positive");
  }
  if (config.network.size() < 1) throw ConfigError("network needs at least one node");
  for (const auto& node : config.network.nodes) {
    if (node.sensing_range <= 0.0) throw ConfigError("sensing range must be positive");
  }
  config.network.topology.validate();
  if (config.network.topology.size() != config.network.size()) {
    throw ConfigError("topology size does not match node count");
  }
  validate_consensus(config.consensus, config.network.topology);
  if (config.prior_policy.rho < 0.0 || config.prior_policy.rho >= 1.0) {
    throw ConfigError("prior correlation must be in [0, 1)");
  }
  const auto check_spd = [](const auto& m, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(symmetrize(m)));
    if (llt.info() != Eigen::Success) {
      throw ConfigError(std::string(what) + " is not positive definite");
    }
  };
  check_spd(config.mult_cov, "mult_cov");
  check_spd(config.node_kin_prior_cov, "node kinematic prior covariance");
  check_spd(config.node_ext_prior_cov, "node extent prior covariance");
  check_spd(config.central_kin_prior_cov, "central kinematic prior covariance");
  check_spd(config.central_ext_prior_cov, "central extent prior covariance");
  for (const auto& node : config.network.nodes) check_spd(node.meas_cov, "node meas_cov");
  build_truth(config);  // validates waypoints, spacing, and horizon
}

// ---------------------------------------------------------------------------
// Built-in scenarios.

/// Rectangular object moving along its orientation: two straight legs joined
/// by a quarter turn, single always-detecting sensor.
inline ScenarioConfig build_s1() {
  ScenarioConfig c;
  c.name = "s1";
  c.dynamics.scan_period = 3.0;
  c.dynamics.kin_transition = ncv_transition(3.0);
  c.dynamics.ext_transition = Mat3::Identity();
  c.dynamics.kin_proc_cov = Vec4(50.0, 50.0, 1.0, 1.0).asDiagonal();
  // Both semi-lengths of the rigid rectangle share the small per-scan
  // distortion variance; the sideslip keeps its own slack. A large variance
  // on a semi-length feeds the pseudo-measurement de-biasing enough to
  // collapse that axis on a rigid object.
  c.dynamics.ext_proc_cov =
      Vec3(1.0 / 500.0, 1.0 / 500.0, 1.0 / 220.0).asDiagonal();
  c.mult_cov = Mat2::Identity() / 3.0;
  c.shape = ObjectShape::rectangle;
  c.true_semi_lengths = Vec2(1.5, 2.0);

  SensorNode node;
  node.id = 0;
  node.position = Vec2(120.0, 120.0);
  node.sensing_range = 1e6;
  node.meas_cov = Vec2(1.0 / 3.0, 1.0 / 3.0).asDiagonal();
  c.network.nodes = {node};
  c.network.topology = Topology::from_edges(1, {});

  c.trajectory.waypoints = {Vec2(0.0, 0.0), Vec2(240.0, 0.0), Vec2(240.0, 240.0)};
  c.trajectory.speed = 1.5;
  c.trajectory.corner_radius = 80.0;
  c.trajectory.profile = SideslipProfile::aligned;

  c.scan_count = 100;
  c.lambda = 7.0;
  c.monte_carlo_runs = 50;

  c.consensus.rate = 0.5;
  c.consensus.iterations = 1;
  c.consensus.prior_case = PriorCase::converged;

  c.prior_policy = {PriorInitPolicy::Mode::equal, 0.0};
  c.node_kin_prior_cov = Vec4(2.0, 2.0, 0.2, 0.2).asDiagonal();
  c.node_ext_prior_cov = Vec3(0.36, 1.0 / 500.0, 1.0 / 50.0).asDiagonal();
  c.central_kin_prior_cov = c.node_kin_prior_cov;
  c.central_ext_prior_cov = c.node_ext_prior_cov;
  return c;
}

/// As S1 but the body orientation is fixed at pi/4 while the velocity
/// direction varies, so the sideslip is nonzero away from 45-degree legs.
/// The turn comes early so the drift changes while information accumulates.
inline ScenarioConfig build_s2() {
  ScenarioConfig c = build_s1();
  c.name = "s2";
  c.dynamics.ext_proc_cov =
      Vec3(1.0 / 400.0, 1.0 / 400.0, 1.0 / 300.0).asDiagonal();
  c.node_ext_prior_cov = Vec3(0.01, 1.0 / 500.0, 1.0 / 100.0).asDiagonal();
  c.central_ext_prior_cov = c.node_ext_prior_cov;
  // Early 45-degree turn: the drift changes within the first ten scans and
  // stays constant afterwards. A quarter turn would land the drift exactly on
  // the axis-swap ambiguity of the elliptic extent, where beta +- pi/2 with
  // exchanged semi-lengths explains the same data.
  c.trajectory.waypoints = {Vec2(0.0, 0.0), Vec2(30.0, 0.0), Vec2(330.0, 300.0)};
  c.trajectory.corner_radius = 18.0;
  c.trajectory.profile = SideslipProfile::constant_orientation;
  c.trajectory.orientation = M_PI / 4.0;
  return c;
}

/// Nine-node network over a 500 m square watching an elliptical object on a
/// serpentine path. Nodes sit at the grid centers and communicate on a ring,
/// so the maximum degree is 2 and far nodes are naive for part of the run.
inline ScenarioConfig build_s3() {
  ScenarioConfig c;
  c.name = "s3";
  c.dynamics.scan_period = 5.0;
  c.dynamics.kin_transition = ncv_transition(5.0);
  c.dynamics.ext_transition = Mat3::Identity();
  c.dynamics.kin_proc_cov = Vec4(100.0, 100.0, 1.0, 1.0).asDiagonal();
  c.dynamics.ext_proc_cov = Vec3(2e-3, 1e-3, 1e-4).asDiagonal();
  c.mult_cov = Mat2::Identity() / 4.0;
  c.shape = ObjectShape::ellipse;
  c.true_semi_lengths = Vec2(35.0, 30.0);

  // Perimeter order first, center node last, so the id ring 0-1-...-8-0 is
  // the communication cycle.
  const std::vector<Vec2> positions = {
      {125.0, 125.0}, {250.0, 125.0}, {375.0, 125.0},
      {375.0, 250.0}, {375.0, 375.0}, {250.0, 375.0},
      {125.0, 375.0}, {125.0, 250.0}, {250.0, 250.0}};
  for (int s = 0; s < 9; ++s) {
    SensorNode node;
    node.id = s;
    node.position = positions[s];
    node.sensing_range = 200.0;
    node.meas_cov = Vec2(40.0, 20.0).asDiagonal();
    c.network.nodes.push_back(node);
  }
  c.network.topology = Topology::ring(9);

  c.trajectory.waypoints = {Vec2(25.0, 300.0),  Vec2(440.0, 300.0),
                            Vec2(440.0, 140.0), Vec2(60.0, 140.0),
                            Vec2(60.0, 420.0),  Vec2(440.0, 420.0)};
  c.trajectory.speed = 100.0 / 36.0;
  c.trajectory.corner_radius = 50.0;
  c.trajectory.profile = SideslipProfile::aligned;

  c.scan_count = 100;
  c.lambda = 10.0;
  c.monte_carlo_runs = 50;

  c.consensus.rate = 0.65 / 2.0;
  c.consensus.iterations = 10;
  c.consensus.prior_case = PriorCase::converged;

  c.prior_policy = {PriorInitPolicy::Mode::equal, 0.0};
  c.node_kin_prior_cov = Vec4(50.0, 50.0, 10.0, 10.0).asDiagonal();
  c.node_ext_prior_cov = Vec3(0.01, 0.1, 0.1).asDiagonal();
  c.central_kin_prior_cov = Vec4(2.0, 2.0, 0.5, 0.5).asDiagonal();
  c.central_ext_prior_cov = Vec3(2e-3, 1e-3, 1e-4).asDiagonal();
  return c;
}

/// S3 with independently initialized node priors: base covariances scaled
/// per node by uniform draws, optionally with cross-node correlation rho.
inline ScenarioConfig build_s3_unequal(bool correlated) {
  ScenarioConfig c = build_s3();
  c.name = correlated ? "s3-correlated" : "s3-unequal";
  c.prior_policy.mode = correlated ? PriorInitPolicy::Mode::correlated_unequal
                                   : PriorInitPolicy::Mode::uncorrelated_unequal;
  c.prior_policy.rho = correlated ? 0.5 : 0.0;
  c.consensus.prior_case = PriorCase::uncorrelated;
  c.node_kin_prior_cov = Vec4(100.0, 100.0, 10.0, 10.0).asDiagonal();
  c.node_ext_prior_cov = Vec3(1.0, 7.0, 7.0).asDiagonal();
  return c;
}

// ---------------------------------------------------------------------------
// Serialization. Unknown keys are rejected so typos in override files fail
// loudly instead of silently using defaults.

namespace detail {

using json = nlohmann::json;

inline void require_keys(const json& j, const std::set<std::string>& keys,
                         const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items()) {
    if (!keys.contains(item.key())) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
  for (const auto& k : keys) {
    if (!j.contains(k)) throw ConfigError(where + ": missing key '" + k + "'");
  }
}

template <int R, int C>
json matrix_to_json(const Eigen::Matrix<double, R, C>& m) {
  json rows = json::array();
  for (int r = 0; r < R; ++r) {
    json row = json::array();
    for (int c = 0; c < C; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

template <int R, int C>
Eigen::Matrix<double, R, C> matrix_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != R) throw ConfigError(where + ": expected " + std::to_string(R) + " rows");
  Eigen::Matrix<double, R, C> m;
  for (int r = 0; r < R; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != C) {
      throw ConfigError(where + ": expected " + std::to_string(C) + " columns");
    }
    for (int c = 0; c < C; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

inline json vec2_to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }

inline Vec2 vec2_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) throw ConfigError(where + ": expected 2 values");
  return Vec2(j[0].get<double>(), j[1].get<double>());
}

}  // namespace detail

inline nlohmann::json to_json(const ScenarioConfig& c) {
  using detail::matrix_to_json;
  using detail::vec2_to_json;
  nlohmann::json j;
  j["name"] = c.name;
  j["scan_count"] = c.scan_count;
  j["lambda"] = c.lambda;
  j["monte_carlo_runs"] = c.monte_carlo_runs;
  j["shape"] = c.shape == ObjectShape::rectangle ? "rectangle" : "ellipse";
  j["true_semi_lengths"] = vec2_to_json(c.true_semi_lengths);
  j["dynamics"] = {
      {"scan_period", c.dynamics.scan_period},
      {"kin_transition", matrix_to_json<4, 4>(c.dynamics.kin_transition)},
      {"ext_transition", matrix_to_json<3, 3>(c.dynamics.ext_transition)},
      {"kin_proc_cov", matrix_to_json<4, 4>(c.dynamics.kin_proc_cov)},
      {"ext_proc_cov", matrix_to_json<3, 3>(c.dynamics.ext_proc_cov)}};
  j["mult_cov"] = matrix_to_json<2, 2>(c.mult_cov);

  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& n : c.network.nodes) {
    nodes.push_back({{"id", n.id},
                     {"position", vec2_to_json(n.position)},
                     {"sensing_range", n.sensing_range},
                     {"meas_cov", matrix_to_json<2, 2>(n.meas_cov)}});
  }
  nlohmann::json edges = nlohmann::json::array();
  const auto& adj = c.network.topology.adjacency();
  for (int a = 0; a < adj.rows(); ++a) {
    for (int b = a + 1; b < adj.cols(); ++b) {
      if (adj(a, b) != 0) edges.push_back({a, b});
    }
  }
  j["network"] = {{"nodes", nodes}, {"edges", edges}};

  j["consensus"] = {
      {"rate", c.consensus.rate},
      {"iterations", c.consensus.iterations},
      {"weight_policy", "count"},
      {"prior_case",
       c.consensus.prior_case == PriorCase::converged ? "converged" : "uncorrelated"}};
  const char* mode = nullptr;
  switch (c.prior_policy.mode) {
    case PriorInitPolicy::Mode::equal: mode = "equal"; break;
    case PriorInitPolicy::Mode::uncorrelated_unequal: mode = "uncorrelated_unequal"; break;
    case PriorInitPolicy::Mode::correlated_unequal: mode = "correlated_unequal"; break;
  }
  j["prior_policy"] = {{"mode", mode}, {"rho", c.prior_policy.rho}};
  j["priors"] = {
      {"node_kin_cov", matrix_to_json<4, 4>(c.node_kin_prior_cov)},
      {"node_ext_cov", matrix_to_json<3, 3>(c.node_ext_prior_cov)},
      {"central_kin_cov", matrix_to_json<4, 4>(c.central_kin_prior_cov)},
      {"central_ext_cov", matrix_to_json<3, 3>(c.central_ext_prior_cov)}};

  nlohmann::json waypoints = nlohmann::json::array();
  for (const auto& w : c.trajectory.waypoints) waypoints.push_back(vec2_to_json(w));
  j["trajectory"] = {
      {"waypoints", waypoints},
      {"speed", c.trajectory.speed},
      {"corner_radius", c.trajectory.corner_radius},
      {"sideslip_profile", c.trajectory.profile == SideslipProfile::aligned
                               ? "aligned"
                               : "constant_orientation"},
      {"orientation", c.trajectory.orientation}};
  return j;
}

inline ScenarioConfig config_from_json(const nlohmann::json& j) {
  using detail::matrix_from_json;
  using detail::require_keys;
  using detail::vec2_from_json;
  require_keys(j,
               {"name", "scan_count", "lambda", "monte_carlo_runs", "shape",
                "true_semi_lengths", "dynamics", "mult_cov", "network",
                "consensus", "prior_policy", "priors", "trajectory"},
               "config");
  ScenarioConfig c;
  c.name = j["name"].get<std::string>();
  c.scan_count = j["scan_count"].get<int>();
  c.lambda = j["lambda"].get<double>();
  c.monte_carlo_runs = j["monte_carlo_runs"].get<int>();
  const std::string shape = j["shape"].get<std::string>();
  if (shape == "rectangle") c.shape = ObjectShape::rectangle;
  else if (shape == "ellipse") c.shape = ObjectShape::ellipse;
  else throw ConfigError("config: unknown shape '" + shape + "'");
  c.true_semi_lengths = vec2_from_json(j["true_semi_lengths"], "true_semi_lengths");

  const auto& dyn = j["dynamics"];
  require_keys(dyn, {"scan_period", "kin_transition", "ext_transition",
                     "kin_proc_cov", "ext_proc_cov"}, "dynamics");
  c.dynamics.scan_period = dyn["scan_period"].get<double>();
  c.dynamics.kin_transition = matrix_from_json<4, 4>(dyn["kin_transition"], "kin_transition");
  c.dynamics.ext_transition = matrix_from_json<3, 3>(dyn["ext_transition"], "ext_transition");
  c.dynamics.kin_proc_cov = matrix_from_json<4, 4>(dyn["kin_proc_cov"], "kin_proc_cov");
  c.dynamics.ext_proc_cov = matrix_from_json<3, 3>(dyn["ext_proc_cov"], "ext_proc_cov");
  c.mult_cov = matrix_from_json<2, 2>(j["mult_cov"], "mult_cov");

  const auto& net = j["network"];
  require_keys(net, {"nodes", "edges"}, "network");
  for (const auto& nj : net["nodes"]) {
    require_keys(nj, {"id", "position", "sensing_range", "meas_cov"}, "node");
    SensorNode node;
    node.id = nj["id"].get<int>();
    node.position = vec2_from_json(nj["position"], "node position");
    node.sensing_range = nj["sensing_range"].get<double>();
    node.meas_cov = matrix_from_json<2, 2>(nj["meas_cov"], "node meas_cov");
    c.network.nodes.push_back(node);
  }
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : net["edges"]) {
    if (!e.is_array() || e.size() != 2) throw ConfigError("network: bad edge");
    edges.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  c.network.topology = Topology::from_edges(c.network.size(), edges);

  const auto& cons = j["consensus"];
  require_keys(cons, {"rate", "iterations", "weight_policy", "prior_case"}, "consensus");
  c.consensus.rate = cons["rate"].get<double>();
  c.consensus.iterations = cons["iterations"].get<int>();
  if (cons["weight_policy"].get<std::string>() != "count") {
    throw ConfigError("consensus: unknown weight_policy");
  }
  const std::string pc = cons["prior_case"].get<std::string>();
  if (pc == "converged") c.consensus.prior_case = PriorCase::converged;
  else if (pc == "uncorrelated") c.consensus.prior_case = PriorCase::uncorrelated;
  else throw ConfigError("consensus: unknown prior_case '" + pc + "'");

  const auto& pol = j["prior_policy"];
  require_keys(pol, {"mode", "rho"}, "prior_policy");
  const std::string mode = pol["mode"].get<std::string>();
  if (mode == "equal") c.prior_policy.mode = PriorInitPolicy::Mode::equal;
  else if (mode == "uncorrelated_unequal") c.prior_policy.mode = PriorInitPolicy::Mode::uncorrelated_unequal;
  else if (mode == "correlated_unequal") c.prior_policy.mode = PriorInitPolicy::Mode::correlated_unequal;
  else throw ConfigError("prior_policy: unknown mode '" + mode + "'");
  c.prior_policy.rho = pol["rho"].get<double>();

  const auto& priors = j["priors"];
  require_keys(priors, {"node_kin_cov", "node_ext_cov", "central_kin_cov", "central_ext_cov"}, "priors");
  c.node_kin_prior_cov = matrix_from_json<4, 4>(priors["node_kin_cov"], "node_kin_cov");
  c.node_ext_prior_cov = matrix_from_json<3, 3>(priors["node_ext_cov"], "node_ext_cov");
  c.central_kin_prior_cov = matrix_from_json<4, 4>(priors["central_kin_cov"], "central_kin_cov");
  c.central_ext_prior_cov = matrix_from_json<3, 3>(priors["central_ext_cov"], "central_ext_cov");

  const auto& traj = j["trajectory"];
  require_keys(traj, {"waypoints", "speed", "corner_radius", "sideslip_profile", "orientation"}, "trajectory");
  for (const auto& w : traj["waypoints"]) {
    c.trajectory.waypoints.push_back(vec2_from_json(w, "waypoint"));
  }
  c.trajectory.speed = traj["speed"].get<double>();
  c.trajectory.corner_radius = traj["corner_radius"].get<double>();
  const std::string profile = traj["sideslip_profile"].get<std::string>();
  if (profile == "aligned") c.trajectory.profile = SideslipProfile::aligned;
  else if (profile == "constant_orientation") c.trajectory.profile = SideslipProfile::constant_orientation;
  else throw ConfigError("trajectory: unknown sideslip_profile '" + profile + "'");
  c.trajectory.orientation = traj["orientation"].get<double>();
  return c;
}

inline std::vector<std::string> builtin_scenarios() {
  return {"s1", "s2", "s3", "s3-unequal", "s3-correlated"};
}

inline ScenarioConfig build_scenario(const std::string& name) {
  if (name == "s1") return build_s1();
  if (name == "s2") return build_s2();
  if (name == "s3") return build_s3();
  if (name == "s3-unequal") return build_s3_unequal(false);
  if (name == "s3-correlated") return build_s3_unequal(true);
  throw ConfigError("unknown scenario '" + name + "'");
}

}  // namespace cvtrack
