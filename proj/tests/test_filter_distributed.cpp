#include <catch2/catch_amalgamated.hpp>

#include "cvtrack/filter_distributed.hpp"
#include "cvtrack/metrics.hpp"
#include "cvtrack/scenarios.hpp"
#include "helpers.hpp"

using namespace cvtrack;
using namespace cvtrack::testing;

namespace {

FilterModels node_models(int nodes) {
  FilterModels m;
  m.noise.mult_cov = Mat2::Identity() / 3.0;
  for (int s = 0; s < nodes; ++s) {
    m.noise.meas_cov_per_node.push_back(Vec2(0.3 + 0.1 * s, 0.4).asDiagonal());
  }
  m.dynamics.kin_transition = ncv_transition(1.0);
  m.dynamics.kin_proc_cov = Vec4(0.5, 0.5, 0.1, 0.1).asDiagonal();
  m.dynamics.ext_proc_cov = Vec3(1e-3, 1e-3, 1e-4).asDiagonal();
  m.dynamics.scan_period = 1.0;
  return m;
}

NodeFilterState make_node_state(int id) {
  NodeFilterState s;
  s.node = id;
  s.kin = KinEstimate::from_moments(Vec4(0.0, 0.0, 2.0, 1.0),
                                    Vec4(2.0, 2.0, 0.5, 0.5).asDiagonal());
  s.ext = ExtEstimate::from_moments(Vec3(2.0, 1.0, 0.1),
                                    Vec3(0.2, 0.2, 0.05).asDiagonal());
  return s;
}

}  // namespace

TEST_CASE("prior weight cases") {
  const Mat3 info = Vec3(4.0, 8.0, 12.0).asDiagonal();
  const Mat3 case1 = prior_weight<3>(info, PriorCase::converged, 4);
  REQUIRE(max_abs_diff(case1, (info / 4.0).eval()) < 1e-15);
  const Mat3 case2 = prior_weight<3>(info, PriorCase::uncorrelated, 4);
  REQUIRE(case2 == info);

  // Summed over identical nodes, the converged weighting reproduces the
  // shared information matrix.
  Mat3 sum = Mat3::Zero();
  for (int s = 0; s < 4; ++s) sum += case1;
  REQUIRE(max_abs_diff(sum, info) < 1e-12);
}

TEST_CASE("naive node contributes only its weighted prior") {
  const FilterModels models = node_models(3);
  const NodeFilterState state = make_node_state(1);
  const ConsensusQuantities q = local_consensus_quantities(
      state, std::nullopt, models, PriorCase::converged, 3);
  REQUIRE(max_abs_diff(q.info_kin, (state.kin.info / 3.0).eval()) < 1e-15);
  REQUIRE(max_abs_diff(q.data_kin, (state.kin.info / 3.0 * state.kin.mean).eval()) <
          1e-15);
  REQUIRE(max_abs_diff(q.info_ext, (state.ext.info / 3.0).eval()) < 1e-15);
  REQUIRE(max_abs_diff(q.data_ext, (state.ext.info / 3.0 * state.ext.mean).eval()) <
          1e-15);
}

TEST_CASE("a detecting node with negligible information behaves as naive") {
  FilterModels models = node_models(2);
  models.noise.meas_cov_per_node[0] = Mat2::Identity() * 1e14;
  const NodeFilterState state = make_node_state(0);
  const ConsensusQuantities with = local_consensus_quantities(
      state, Vec2(0.5, -0.5), models, PriorCase::converged, 2);
  const ConsensusQuantities naive = local_consensus_quantities(
      state, std::nullopt, models, PriorCase::converged, 2);
  REQUIRE(relative_error(with.info_kin, naive.info_kin) < 1e-10);
  REQUIRE(relative_error(with.info_ext, naive.info_ext) < 1e-10);
}

TEST_CASE("summed consensus quantities match the centralized update") {
  const int n = 9;
  const FilterModels models = node_models(n);
  std::vector<NodeFilterState> states;
  for (int s = 0; s < n; ++s) states.push_back(make_node_state(s));

  RngStream rng(41);
  NodeMeasurementSlice slice(n);
  for (int s = 0; s < n; ++s) {
    if (s % 3 != 2) slice[s] = Vec2(rng.normal(), rng.normal());
  }

  ConsensusQuantities sum;
  for (int s = 0; s < n; ++s) {
    const ConsensusQuantities q = local_consensus_quantities(
        states[s], slice[s], models, PriorCase::converged, n);
    sum = sum + q;
  }

  const CentralFilterState central{states[0].kin, states[0].ext, 0};
  const CentralFilterState kin_updated = update_kinematics(central, slice, models);
  const CentralFilterState ext_updated = update_extent(central, slice, models);
  REQUIRE(relative_error(sum.info_kin, kin_updated.kin.info) < 1e-12);
  REQUIRE(relative_error(sum.info_ext, ext_updated.ext.info) < 1e-12);
  REQUIRE((spd_inverse<4>(sum.info_kin) * sum.data_kin - kin_updated.kin.mean)
              .norm() < 1e-10);
  REQUIRE((spd_inverse<3>(sum.info_ext) * sum.data_ext - ext_updated.ext.mean)
              .norm() < 1e-10);
}

TEST_CASE("two fully connected nodes agree in one step at rate one half") {
  const Topology topo = Topology::full(2);
  std::vector<Eigen::MatrixXd> values = {Eigen::MatrixXd::Constant(1, 1, 0.0),
                                         Eigen::MatrixXd::Constant(1, 1, 2.0)};
  const auto out = average_consensus(values, topo, 0.5, 1);
  REQUIRE(out[0](0, 0) == Catch::Approx(1.0));
  REQUIRE(out[1](0, 0) == Catch::Approx(1.0));
}

TEST_CASE("identical values are a consensus fixed point") {
  const Topology topo = Topology::ring(5);
  std::vector<Eigen::MatrixXd> values(5, Eigen::MatrixXd::Constant(2, 2, 3.7));
  const auto out = average_consensus(values, topo, 0.3, 50);
  for (const auto& v : out) REQUIRE(max_abs_diff(v, values[0]) < 1e-12);
}

TEST_CASE("ring consensus reaches the arithmetic mean") {
  const Topology topo = Topology::ring(6);
  RngStream rng(42);
  std::vector<Eigen::MatrixXd> values;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 3);
  for (int s = 0; s < 6; ++s) {
    Eigen::MatrixXd v(3, 3);
    for (int i = 0; i < 9; ++i) v(i / 3, i % 3) = rng.normal();
    values.push_back(v);
    mean += v;
  }
  mean /= 6.0;
  const auto out = average_consensus(values, topo, 0.65 / 2.0, 200);
  for (const auto& v : out) REQUIRE(max_abs_diff(v, mean) < 1e-6);
}

TEST_CASE("consensus conserves the per-element sum at every iteration") {
  const Topology topo = Topology::ring(9);
  RngStream rng(43);
  std::vector<Eigen::MatrixXd> values;
  for (int s = 0; s < 9; ++s) {
    Eigen::MatrixXd v(2, 2);
    for (int i = 0; i < 4; ++i) v(i / 2, i % 2) = 10.0 * rng.normal();
    values.push_back(v);
  }
  Eigen::MatrixXd sum0 = Eigen::MatrixXd::Zero(2, 2);
  for (const auto& v : values) sum0 += v;

  for (int l = 1; l <= 60; ++l) {
    const auto out = average_consensus(values, topo, 0.325, l);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(2, 2);
    for (const auto& v : out) sum += v;
    REQUIRE(max_abs_diff(sum, sum0) < 1e-12 * sum0.cwiseAbs().maxCoeff() + 1e-13);
  }
}

TEST_CASE("consensus error decays geometrically") {
  const Topology topo = Topology::ring(9);
  RngStream rng(44);
  std::vector<Eigen::MatrixXd> values;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(1, 1);
  for (int s = 0; s < 9; ++s) {
    values.push_back(Eigen::MatrixXd::Constant(1, 1, rng.normal()));
    mean += values.back();
  }
  mean /= 9.0;
  std::vector<double> log_err;
  for (int l = 5; l <= 50; l += 5) {
    const auto out = average_consensus(values, topo, 0.325, l);
    double err = 0.0;
    for (const auto& v : out) err += (v - mean).norm();
    log_err.push_back(std::log(err));
  }
  // Least-squares slope of log error against iteration count.
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < log_err.size(); ++i) {
    const double x = 5.0 * (i + 1);
    sx += x;
    sy += log_err[i];
    sxx += x * x;
    sxy += x * log_err[i];
  }
  const double n = static_cast<double>(log_err.size());
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  REQUIRE(slope < -0.05);
}

TEST_CASE("consensus validates its inputs") {
  const Topology topo = Topology::ring(4);
  std::vector<Eigen::MatrixXd> values(4, Eigen::MatrixXd::Zero(1, 1));
  REQUIRE_THROWS_AS(average_consensus(values, topo, 0.6, 5), ConfigError);
  REQUIRE_THROWS_AS(average_consensus(values, topo, 0.0, 5), ConfigError);
  std::vector<Eigen::MatrixXd> wrong(3, Eigen::MatrixXd::Zero(1, 1));
  REQUIRE_THROWS_AS(average_consensus(wrong, topo, 0.3, 5), ConfigError);
  REQUIRE_THROWS_AS(average_consensus(std::vector<Eigen::MatrixXd>{}, Topology{},
                                      0.3, 5),
                    ConfigError);
}

TEST_CASE("recovery on a single-node network is the node's own WLS update") {
  const FilterModels models = node_models(1);
  const NodeFilterState state = make_node_state(0);
  const Vec2 y(0.7, -0.2);
  const ConsensusQuantities q = local_consensus_quantities(
      state, y, models, PriorCase::converged, 1);
  const Topology single = Topology::from_edges(1, {});
  ConsensusConfig config;
  config.rate = 0.5;
  config.iterations = 7;
  const auto after =
      average_consensus(std::vector<ConsensusQuantities>{q}, single, 0.5, 7);
  const auto recovered = recover_estimates(after, config, 1);

  NodeMeasurementSlice slice(1);
  slice[0] = y;
  const CentralFilterState central{state.kin, state.ext, 0};
  const CentralFilterState kin_updated = update_kinematics(central, slice, models);
  const CentralFilterState ext_updated = update_extent(central, slice, models);
  REQUIRE((recovered[0].kin.mean - kin_updated.kin.mean).norm() < 1e-12);
  REQUIRE(relative_error(recovered[0].kin.info, kin_updated.kin.info) < 1e-12);
  REQUIRE((recovered[0].ext.mean - ext_updated.ext.mean).norm() < 1e-12);
  REQUIRE(relative_error(recovered[0].ext.info, ext_updated.ext.info) < 1e-12);
}

TEST_CASE("recovered means are invariant to uniform scaling") {
  const FilterModels models = node_models(2);
  const NodeFilterState state = make_node_state(0);
  const ConsensusQuantities q = local_consensus_quantities(
      state, Vec2(0.4, 0.1), models, PriorCase::converged, 2);
  ConsensusConfig config;
  const auto base = recover_estimates({q, q}, config, 2);
  const ConsensusQuantities scaled = q * 3.7;
  const auto after = recover_estimates({scaled, scaled}, config, 2);
  REQUIRE((base[0].kin.mean - after[0].kin.mean).norm() < 1e-12);
  REQUIRE((base[0].ext.mean - after[0].ext.mean).norm() < 1e-12);
}

TEST_CASE("equal priors and many iterations reproduce the centralized filter") {
  const int n = 9;
  const FilterModels models = node_models(n);
  const Topology topo = Topology::ring(n);
  std::vector<NodeFilterState> states;
  for (int s = 0; s < n; ++s) states.push_back(make_node_state(s));

  RngStream rng(45);
  NodeMeasurementSlice slice(n);
  for (int s = 0; s < n; ++s) {
    if (s != 4 && s != 7) slice[s] = Vec2(rng.normal(), rng.normal());
  }

  std::vector<ConsensusQuantities> deltas(n);
  for (int s = 0; s < n; ++s) {
    deltas[s] = local_consensus_quantities(states[s], slice[s], models,
                                           PriorCase::converged, n);
  }
  deltas = average_consensus(std::move(deltas), topo, 0.325, 500);
  ConsensusConfig config;
  const auto recovered = recover_estimates(deltas, config, n);

  const CentralFilterState central{states[0].kin, states[0].ext, 0};
  const CentralFilterState kin_updated = update_kinematics(central, slice, models);
  const CentralFilterState ext_updated = update_extent(central, slice, models);
  for (const auto& node : recovered) {
    REQUIRE((node.kin.mean - kin_updated.kin.mean).norm() < 1e-6);
    REQUIRE(relative_error(node.kin.info, kin_updated.kin.info) < 1e-6);
    REQUIRE((node.ext.mean - ext_updated.ext.mean).norm() < 1e-6);
    REQUIRE(relative_error(node.ext.info, ext_updated.ext.info) < 1e-6);
  }
}

TEST_CASE("single-node distributed run equals the centralized filter") {
  const FilterModels models = node_models(1);
  SensorNetwork net;
  SensorNode node;
  node.id = 0;
  node.position = Vec2::Zero();
  node.sensing_range = 1e9;
  node.meas_cov = models.noise.meas_cov_per_node[0];
  net.nodes = {node};
  net.topology = Topology::from_edges(1, {});

  RngStream rng(46);
  std::vector<MeasurementBatch> batches;
  Vec2 pos(0.0, 0.0);
  const Vec2 vel(2.0, 1.0);
  for (int k = 0; k < 12; ++k) {
    GroundTruthStep truth{{pos, vel}, {Vec2(2.0, 1.0), 0.1}, 0.0};
    truth.orientation = wrap_angle(std::atan2(vel.y(), vel.x()) - 0.1);
    MeasurementBatch b;
    b.per_node = {
        generate_measurements(truth, node, ObjectShape::rectangle, 5.0, rng)};
    batches.push_back(b);
    pos += vel;
  }

  ConsensusConfig config;
  config.rate = 0.5;
  config.iterations = 3;
  config.prior_case = PriorCase::converged;
  const NodeFilterState initial = make_node_state(0);
  const auto tracks = run_dwlsf(net, batches, config, models, {initial});

  CentralFilterState central{initial.kin, initial.ext, 0};
  for (std::size_t k = 0; k < batches.size(); ++k) {
    central = sequential_scan(central, batches[k], models);
    REQUIRE((tracks[k][0].kin.mean - central.kin.mean).norm() < 1e-9);
    REQUIRE((tracks[k][0].ext.mean - central.ext.mean).norm() < 1e-9);
    REQUIRE(relative_error(tracks[k][0].kin.info, central.kin.info) < 1e-9);
    if (k + 1 < batches.size()) central = time_update(central, models.dynamics);
  }
}

TEST_CASE("distributed filter validates the consensus configuration") {
  const FilterModels models = node_models(2);
  SensorNetwork net;
  for (int s = 0; s < 2; ++s) {
    SensorNode node;
    node.id = s;
    node.sensing_range = 10.0;
    net.nodes.push_back(node);
  }
  net.topology = Topology::full(2);
  ConsensusConfig bad;
  bad.rate = 2.0;
  REQUIRE_THROWS_AS(
      run_dwlsf(net, {}, bad, models, {make_node_state(0), make_node_state(1)}),
      ConfigError);
  ConsensusConfig good;
  good.rate = 0.4;
  REQUIRE_THROWS_AS(run_dwlsf(net, {}, good, models, {make_node_state(0)}),
                    ConfigError);
}
