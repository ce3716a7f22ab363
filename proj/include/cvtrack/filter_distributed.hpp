#pragma once

#include <optional>
#include <vector>

#include "cvtrack/filter_central.hpp"
#include "cvtrack/model.hpp"
#include "cvtrack/network.hpp"
#include "cvtrack/types.hpp"

namespace cvtrack {

/// Case I treats the node priors as copies of one converged estimate whose
/// information is therefore redundant across the network; Case II treats
/// them as mutually uncorrelated sources.
enum class PriorCase { converged, uncorrelated };

enum class WeightPolicy { count };

struct ConsensusConfig {
  double rate = 0.0;          // xi in (0, 1/max_degree)
  int iterations = 1;         // L
  WeightPolicy weight_policy = WeightPolicy::count;
  PriorCase prior_case = PriorCase::converged;
};

inline void validate_consensus(const ConsensusConfig& config,
                               const Topology& topology) {
  if (config.iterations < 1) throw ConfigError("consensus iterations must be >= 1");
  if (config.rate <= 0.0) throw ConfigError("consensus rate must be positive");
  const int dmax = topology.max_degree();
  if (dmax > 0 && config.rate >= 1.0 / dmax) {
    throw ConfigError("consensus rate must be below 1/max_degree");
  }
  if (!topology.connected()) throw ConfigError("topology is not connected");
}

struct NodeFilterState {
  int node = 0;
  KinEstimate kin;
  ExtEstimate ext;
};

/// Per-node consensus payload: information-matrix and information-vector
/// increments for the kinematics and the extent.
struct ConsensusQuantities {
  Mat4 info_kin = Mat4::Zero();
  Vec4 data_kin = Vec4::Zero();
  Mat3 info_ext = Mat3::Zero();
  Vec3 data_ext = Vec3::Zero();

  ConsensusQuantities operator+(const ConsensusQuantities& o) const {
    return {info_kin + o.info_kin, data_kin + o.data_kin,
            info_ext + o.info_ext, data_ext + o.data_ext};
  }
  ConsensusQuantities operator-(const ConsensusQuantities& o) const {
    return {info_kin - o.info_kin, data_kin - o.data_kin,
            info_ext - o.info_ext, data_ext - o.data_ext};
  }
  ConsensusQuantities operator*(double c) const {
    return {info_kin * c, data_kin * c, info_ext * c, data_ext * c};
  }
};

/// Prior weighting of a node's information matrix: the converged case
/// divides by the network size because the same information is held
/// everywhere; the uncorrelated case keeps it whole.
template <int N>
Eigen::Matrix<double, N, N> prior_weight(
    const Eigen::Matrix<double, N, N>& info, PriorCase prior_case,
    int network_size) {
  if (network_size < 1) throw ConfigError("network size must be >= 1");
  if (prior_case == PriorCase::converged) {
    return info / static_cast<double>(network_size);
  }
  return info;
}

/// Builds the node's consensus payload at one sequential index. A node
/// without a measurement contributes only its weighted prior.
inline ConsensusQuantities local_consensus_quantities(
    const NodeFilterState& state, const std::optional<Vec2>& measurement,
    const FilterModels& models, PriorCase prior_case, int network_size) {
  ConsensusQuantities q;
  q.info_kin = prior_weight<4>(state.kin.info, prior_case, network_size);
  q.data_kin = q.info_kin * state.kin.mean;
  q.info_ext = prior_weight<3>(state.ext.info, prior_case, network_size);
  q.data_ext = q.info_ext * state.ext.mean;
  if (!measurement) return q;

  const EquivalentNoiseTerms terms = compute_equivalent_noise_terms(
      state.kin, state.ext, models.noise.mult_cov);
  const Mat2 rx = floor_spd<2>(
      terms.induced + models.noise.meas_cov_per_node.at(state.node), 0.0);
  const Mat2 vx = spd_inverse<2>(rx);
  q.info_kin.block<2, 2>(0, 0) += vx;
  q.data_kin.head<2>() += vx * (*measurement);

  const Mat3& m = terms.pseudo_matrix;
  const Mat2 cy = symmetrize(terms.pos_cov + rx);
  const PseudoNoiseMoments pn = pseudo_noise_moments(m, state.ext, cy);
  const Mat3 vp = spd_inverse<3>(pn.cov);
  const Vec3 debiased = pseudo_measurement(*measurement, state.kin.mean) - pn.mean;
  q.info_ext += m.transpose() * vp * m;
  q.data_ext += m.transpose() * vp * debiased;
  return q;
}

/// L iterations of the average-consensus protocol
///   a_s <- a_s + xi * sum_{j in neighbors(s)} (a_j - a_s)
/// elementwise on whatever the payload type is. Converges to the arithmetic
/// mean on connected graphs for xi in (0, 1/max_degree).
template <typename T>
std::vector<T> average_consensus(std::vector<T> values,
                                 const Topology& topology, double rate,
                                 int iterations) {
  if (static_cast<int>(values.size()) != topology.size()) {
    throw ConfigError("value count does not match topology size");
  }
  if (!topology.connected()) throw ConfigError("topology is not connected");
  const int dmax = topology.max_degree();
  if (rate <= 0.0 || (dmax > 0 && rate >= 1.0 / dmax)) {
    throw ConfigError("consensus rate outside (0, 1/max_degree)");
  }
  std::vector<std::vector<int>> nbrs(topology.size());
  for (int s = 0; s < topology.size(); ++s) nbrs[s] = topology.neighbors(s);

  std::vector<T> next = values;
  for (int l = 0; l < iterations; ++l) {
    for (std::size_t s = 0; s < values.size(); ++s) {
      T acc = values[s];
      for (int j : nbrs[s]) {
        acc = acc + (values[j] - values[s]) * rate;
      }
      next[s] = acc;
    }
    std::swap(values, next);
  }
  return values;
}

/// Recovers per-node estimates from consensus output. The mean is the ratio
/// form, invariant to uniform scaling; the information matrix is the
/// network-size multiple of the consensus average so that it matches the
/// centralized sum once consensus has converged.
inline std::vector<NodeFilterState> recover_estimates(
    const std::vector<ConsensusQuantities>& quantities,
    const ConsensusConfig& config, int network_size) {
  (void)config;  // weight_policy::count is the only policy
  std::vector<NodeFilterState> out(quantities.size());
  const double omega = static_cast<double>(network_size);
  for (std::size_t s = 0; s < quantities.size(); ++s) {
    const auto& q = quantities[s];
    out[s].node = static_cast<int>(s);
    out[s].kin.mean = spd_inverse<4>(q.info_kin) * q.data_kin;
    out[s].kin.info = symmetrize(omega * q.info_kin);
    out[s].ext.mean = spd_inverse<3>(q.info_ext) * q.data_ext;
    out[s].ext.info = symmetrize(omega * q.info_ext);
  }
  return out;
}

inline NodeFilterState node_time_update(const NodeFilterState& state,
                                        const DynamicsModel& dynamics) {
  const CentralFilterState next =
      time_update(CentralFilterState{state.kin, state.ext, 0}, dynamics);
  return {state.node, next.kin, next.ext};
}

/// Sequential measurement update of one scan: per index, build the consensus
/// payloads, run L consensus iterations, and recover per-node estimates.
inline std::vector<NodeFilterState> dwlsf_scan(
    std::vector<NodeFilterState> states, const MeasurementBatch& batch,
    const Topology& topology, const ConsensusConfig& config,
    const FilterModels& models, PriorCase scan_case) {
  const int n_nodes = topology.size();
  const int n = batch.sequential_count();
  for (int i = 0; i < n; ++i) {
    const NodeMeasurementSlice slice = batch.slice(i);
    std::vector<ConsensusQuantities> deltas(n_nodes);
    for (int s = 0; s < n_nodes; ++s) {
      deltas[s] = local_consensus_quantities(states[s], slice[s], models,
                                             scan_case, n_nodes);
    }
    deltas = average_consensus(std::move(deltas), topology, config.rate,
                               config.iterations);
    states = recover_estimates(deltas, config, n_nodes);
  }
  return states;
}

/// Full distributed filter loop. Scan 1 uses the configured prior case
/// (uncorrelated for independently initialized nodes, converged for equal
/// priors); later scans always use the converged case because consensus has
/// correlated the nodes. Returns the post-update states of each scan.
inline std::vector<std::vector<NodeFilterState>> run_dwlsf(
    const SensorNetwork& network, const std::vector<MeasurementBatch>& batches,
    const ConsensusConfig& config, const FilterModels& models,
    const std::vector<NodeFilterState>& initial) {
  validate_consensus(config, network.topology);
  if (static_cast<int>(initial.size()) != network.size()) {
    throw ConfigError("initial state count does not match network size");
  }
  std::vector<std::vector<NodeFilterState>> out;
  out.reserve(batches.size());
  std::vector<NodeFilterState> states = initial;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    const PriorCase scan_case =
        (k == 0) ? config.prior_case : PriorCase::converged;
    states = dwlsf_scan(std::move(states), batches[k], network.topology,
                        config, models, scan_case);
    out.push_back(states);
    if (k + 1 < batches.size()) {
      for (auto& s : states) s = node_time_update(s, models.dynamics);
    }
  }
  return out;
}

}  // namespace cvtrack
