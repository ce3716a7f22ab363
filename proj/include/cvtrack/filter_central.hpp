#pragma once

#include <optional>
#include <vector>

#include "cvtrack/model.hpp"
#include "cvtrack/network.hpp"
#include "cvtrack/types.hpp"

namespace cvtrack {

/// Everything a filter needs besides the measurements.
struct FilterModels {
  NoiseModel noise;
  DynamicsModel dynamics;
};

/// Per-node optional measurement at one sequential index.
using NodeMeasurementSlice = std::vector<std::optional<Vec2>>;

struct CentralFilterState {
  KinEstimate kin;
  ExtEstimate ext;
  int seq_index = 0;
};

/// WLS measurement update of the kinematics at one sequential index. All
/// linearization quantities are evaluated at the state passed in (the
/// previous-index estimates); absent nodes contribute nothing.
inline CentralFilterState update_kinematics(const CentralFilterState& state,
                                            const NodeMeasurementSlice& slice,
                                            const FilterModels& models) {
  const EquivalentNoiseTerms terms = compute_equivalent_noise_terms(
      state.kin, state.ext, models.noise.mult_cov);

  Mat2 position_info = Mat2::Zero();
  Vec2 position_data = Vec2::Zero();
  bool any = false;
  for (std::size_t s = 0; s < slice.size(); ++s) {
    if (!slice[s]) continue;
    const Mat2 rx =
        floor_spd<2>(terms.induced + models.noise.meas_cov_per_node.at(s), 0.0);
    const Mat2 vx = spd_inverse<2>(rx);
    position_info += vx;
    position_data += vx * (*slice[s]);
    any = true;
  }
  if (!any) return state;

  CentralFilterState next = state;
  next.kin.info = state.kin.info;
  next.kin.info.block<2, 2>(0, 0) += position_info;  // H^T V H
  Vec4 rhs = state.kin.info * state.kin.mean;
  rhs.head<2>() += position_data;  // H^T V y
  next.kin.mean = spd_inverse<4>(next.kin.info) * rhs;
  return next;
}

/// WLS measurement update of the extent at one sequential index, using
/// de-biased Kronecker pseudo-measurements. Linearizes at the state passed
/// in; in particular the pseudo-measurement residual uses that state's
/// kinematic mean, not the same-index kinematic update.
inline CentralFilterState update_extent(const CentralFilterState& state,
                                        const NodeMeasurementSlice& slice,
                                        const FilterModels& models) {
  const EquivalentNoiseTerms terms = compute_equivalent_noise_terms(
      state.kin, state.ext, models.noise.mult_cov);
  const Mat3& m = terms.pseudo_matrix;

  Mat3 info_gain = Mat3::Zero();
  Vec3 data = Vec3::Zero();
  bool any = false;
  for (std::size_t s = 0; s < slice.size(); ++s) {
    if (!slice[s]) continue;
    const Mat2 rx =
        floor_spd<2>(terms.induced + models.noise.meas_cov_per_node.at(s), 0.0);
    const Mat2 cy = symmetrize(terms.pos_cov + rx);
    const PseudoNoiseMoments pn = pseudo_noise_moments(m, state.ext, cy);
    const Mat3 vp = spd_inverse<3>(pn.cov);
    const Vec3 debiased =
        pseudo_measurement(*slice[s], state.kin.mean) - pn.mean;
    info_gain += m.transpose() * vp * m;
    data += m.transpose() * vp * debiased;
    any = true;
  }
  if (!any) return state;

  CentralFilterState next = state;
  next.ext.info = symmetrize(state.ext.info + info_gain);
  next.ext.mean =
      spd_inverse<3>(next.ext.info) * (state.ext.info * state.ext.mean + data);
  return next;
}

/// Runs the sequential measurement update over all indices of one scan.
/// Within an index the kinematic and extent updates both linearize at the
/// previous-index estimates.
inline CentralFilterState sequential_scan(const CentralFilterState& state,
                                          const MeasurementBatch& batch,
                                          const FilterModels& models) {
  CentralFilterState current = state;
  const int n = batch.sequential_count();
  for (int i = 0; i < n; ++i) {
    const NodeMeasurementSlice slice = batch.slice(i);
    const CentralFilterState kin_next = update_kinematics(current, slice, models);
    const CentralFilterState ext_next = update_extent(current, slice, models);
    current.kin = kin_next.kin;
    current.ext = ext_next.ext;
    current.seq_index = i + 1;
  }
  return current;
}

/// Information-form time update for both estimates.
inline CentralFilterState time_update(const CentralFilterState& state,
                                      const DynamicsModel& dynamics) {
  CentralFilterState next;
  next.kin.mean = dynamics.kin_transition * state.kin.mean;
  next.ext.mean = dynamics.ext_transition * state.ext.mean;
  next.kin.info = spd_inverse<4>(
      dynamics.kin_transition * state.kin.covariance() *
          dynamics.kin_transition.transpose() +
      dynamics.kin_proc_cov);
  next.ext.info = spd_inverse<3>(
      dynamics.ext_transition * state.ext.covariance() *
          dynamics.ext_transition.transpose() +
      dynamics.ext_proc_cov);
  next.seq_index = 0;
  return next;
}

/// Full centralized filter loop: per scan, sequential measurement update
/// followed by the time update. Returns the post-update state of each scan.
inline std::vector<CentralFilterState> run_cwlsf(
    const CentralFilterState& initial,
    const std::vector<MeasurementBatch>& batches, const FilterModels& models) {
  std::vector<CentralFilterState> out;
  out.reserve(batches.size());
  CentralFilterState state = initial;
  for (std::size_t k = 0; k < batches.size(); ++k) {
    state = sequential_scan(state, batches[k], models);
    out.push_back(state);
    if (k + 1 < batches.size()) state = time_update(state, models.dynamics);
  }
  return out;
}

}  // namespace cvtrack
