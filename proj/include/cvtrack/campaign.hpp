#pragma once

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "cvtrack/filter_central.hpp"
#include "cvtrack/filter_distributed.hpp"
#include "cvtrack/metrics.hpp"
#include "cvtrack/scenarios.hpp"

namespace cvtrack {

enum class FilterKind { central, distributed, both };

/// One batch experiment: a scenario, a filter selection, Monte Carlo runs,
/// and the consensus-iteration values to sweep for the distributed filter.
struct RunSpec {
  std::string scenario = "s1";
  FilterKind filter = FilterKind::central;
  int runs = 1;
  std::vector<int> consensus_iters = {10};
  std::uint64_t seed = 1;
  std::string out_dir;
  int threads = 0;  // 0: hardware concurrency
};

struct ResultTable {
  struct Row {
    int scan = 0;  // 1-based scan index
    double scan_time = 0.0;
    int iterations = 0;  // 0 for the centralized filter
    std::string metric;
    double mean = 0.0;
    double stderr_ = 0.0;
  };
  struct Accounting {
    std::string label;
    int completed = 0;
    int diverged = 0;
    std::vector<int> diverged_runs;
  };
  std::vector<Row> rows;
  int runs_requested = 0;
  int scan_count = 0;
  std::vector<Accounting> accounting;
  std::map<std::string, double> wall_clock_sec;  // per label, mean per run
  nlohmann::json manifest;
};

inline ScenarioConfig resolve_scenario(const std::string& name_or_path) {
  for (const auto& name : builtin_scenarios()) {
    if (name == name_or_path) {
      ScenarioConfig c = build_scenario(name);
      validate(c);
      return c;
    }
  }
  std::ifstream in(name_or_path);
  if (!in) {
    throw ConfigError("scenario '" + name_or_path +
                      "' is neither a built-in name nor a readable file");
  }
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("scenario file parse error: " + std::string(e.what()));
  }
  ScenarioConfig c = config_from_json(j);
  validate(c);
  return c;
}

namespace detail {

template <int N>
bool finite(const InfoEstimate<N>& e) {
  return e.mean.allFinite() && e.info.allFinite();
}

/// Metric series of one Monte Carlo run under one filter configuration.
struct RunOutput {
  bool diverged = false;
  int diverged_at = -1;  // 1-based scan where divergence was detected
  std::vector<double> gwd;
  std::vector<double> ospa;
  std::vector<double> acee_kin;  // distributed only
  std::vector<double> acee_ext;
};

inline RunOutput run_central_once(const ScenarioConfig& config,
                                  const std::vector<GroundTruthStep>& truth,
                                  const std::vector<MeasurementBatch>& batches,
                                  const PriorDraw& prior) {
  const FilterModels models = filter_models(config);
  RunOutput out;
  CentralFilterState state{prior.central_kin, prior.central_ext, 0};
  for (int k = 0; k < config.scan_count; ++k) {
    try {
      state = sequential_scan(state, batches[k], models);
      if (!finite(state.kin) || !finite(state.ext)) {
        throw ConditioningError("non-finite estimate");
      }
      out.gwd.push_back(gwd(summary_from_estimates(state.kin.mean, state.ext.mean),
                            make_summary(truth[k].kin.position,
                                         truth[k].ext.semi_lengths,
                                         truth[k].orientation)));
      out.ospa.push_back(
          ospa(object_from_estimates(state.kin.mean, state.ext.mean, config.shape),
               object_from_truth(truth[k], config.shape)));
      if (k + 1 < config.scan_count) state = time_update(state, models.dynamics);
    } catch (const ConditioningError&) {
      out.diverged = true;
      out.diverged_at = k + 1;
      break;
    } catch (const DegenerateInputError&) {
      out.diverged = true;
      out.diverged_at = k + 1;
      break;
    }
  }
  return out;
}

inline RunOutput run_distributed_once(const ScenarioConfig& config,
                                      const std::vector<GroundTruthStep>& truth,
                                      const std::vector<MeasurementBatch>& batches,
                                      const PriorDraw& prior, int iterations) {
  const FilterModels models = filter_models(config);
  ConsensusConfig consensus = config.consensus;
  consensus.iterations = iterations;
  const int n_nodes = config.network.size();
  std::vector<NodeFilterState> states(n_nodes);
  for (int s = 0; s < n_nodes; ++s) {
    states[s] = {s, prior.node_kin[s], prior.node_ext[s]};
  }
  RunOutput out;
  for (int k = 0; k < config.scan_count; ++k) {
    const PriorCase scan_case =
        (k == 0) ? consensus.prior_case : PriorCase::converged;
    try {
      states = dwlsf_scan(std::move(states), batches[k], config.network.topology,
                          consensus, models, scan_case);
      double gwd_sum = 0.0;
      double ospa_sum = 0.0;
      std::vector<Eigen::VectorXd> kin_means, ext_means;
      for (const auto& s : states) {
        if (!finite(s.kin) || !finite(s.ext)) {
          throw ConditioningError("non-finite estimate");
        }
        gwd_sum += gwd(summary_from_estimates(s.kin.mean, s.ext.mean),
                       make_summary(truth[k].kin.position,
                                    truth[k].ext.semi_lengths,
                                    truth[k].orientation));
        ospa_sum += ospa(object_from_estimates(s.kin.mean, s.ext.mean, config.shape),
                         object_from_truth(truth[k], config.shape));
        kin_means.emplace_back(s.kin.mean);
        ext_means.emplace_back(s.ext.mean);
      }
      out.gwd.push_back(gwd_sum / n_nodes);
      out.ospa.push_back(ospa_sum / n_nodes);
      if (n_nodes >= 2) {
        out.acee_kin.push_back(acee(kin_means));
        out.acee_ext.push_back(acee(ext_means));
      }
      if (k + 1 < config.scan_count) {
        for (auto& s : states) s = node_time_update(s, models.dynamics);
      }
    } catch (const ConditioningError&) {
      out.diverged = true;
      out.diverged_at = k + 1;
      break;
    } catch (const DegenerateInputError&) {
      out.diverged = true;
      out.diverged_at = k + 1;
      break;
    }
  }
  return out;
}

struct LabelledSeries {
  std::string label;   // "central" or "L=<n>"
  int iterations = 0;  // 0 for central
  std::vector<RunOutput> runs;
  double wall_clock_sec = 0.0;
};

inline void append_rows(ResultTable& table, const LabelledSeries& series,
                        const ScenarioConfig& config) {
  const auto collect = [&](const char* metric,
                           const std::vector<double> RunOutput::*member) {
    for (int k = 0; k < config.scan_count; ++k) {
      double sum = 0.0, sum2 = 0.0;
      int n = 0;
      for (const auto& run : series.runs) {
        const auto& v = run.*member;
        if (run.diverged || static_cast<int>(v.size()) <= k) continue;
        sum += v[k];
        sum2 += v[k] * v[k];
        ++n;
      }
      if (n == 0) continue;
      const double mean = sum / n;
      const double var = n > 1 ? std::max(0.0, (sum2 - n * mean * mean) / (n - 1)) : 0.0;
      ResultTable::Row row;
      row.scan = k + 1;
      row.scan_time = (k + 1) * config.dynamics.scan_period;
      row.iterations = series.iterations;
      row.metric = metric;
      row.mean = mean;
      row.stderr_ = n > 1 ? std::sqrt(var / n) : 0.0;
      table.rows.push_back(row);
    }
  };
  collect("gwd", &RunOutput::gwd);
  collect("ospa", &RunOutput::ospa);
  if (series.iterations > 0) {
    collect("acee_kin", &RunOutput::acee_kin);
    collect("acee_ext", &RunOutput::acee_ext);
  }

  ResultTable::Accounting acc;
  acc.label = series.label;
  for (std::size_t r = 0; r < series.runs.size(); ++r) {
    if (series.runs[r].diverged) {
      ++acc.diverged;
      acc.diverged_runs.push_back(static_cast<int>(r));
    } else {
      ++acc.completed;
    }
  }
  table.accounting.push_back(acc);
}

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

inline std::uint64_t run_seed_for(std::uint64_t base_seed, int run_index) {
  return derive_seed(base_seed, 0x72756eu, run_index);
}

/// Executes the campaign: per Monte Carlo run, shared measurements feed the
/// selected filters so comparisons are paired. Runs execute in parallel with
/// per-run derived seeds; aggregation is a deterministic reduction ordered by
/// run index, so results do not depend on the thread count.
inline ResultTable run_campaign(const RunSpec& spec) {
  if (spec.runs < 1) throw ConfigError("runs must be >= 1");
  for (int l : spec.consensus_iters) {
    if (l < 1) throw ConfigError("consensus iterations must be >= 1");
  }
  const ScenarioConfig config = resolve_scenario(spec.scenario);
  const std::vector<GroundTruthStep> truth = build_truth(config);

  const bool want_central =
      spec.filter == FilterKind::central || spec.filter == FilterKind::both;
  const bool want_distributed =
      spec.filter == FilterKind::distributed || spec.filter == FilterKind::both;
  if (want_distributed && config.network.size() < 1) {
    throw ConfigError("distributed filter needs a network");
  }

  std::vector<detail::LabelledSeries> series;
  if (want_central) series.push_back({"central", 0, {}, 0.0});
  if (want_distributed) {
    for (int l : spec.consensus_iters) {
      series.push_back({"L=" + std::to_string(l), l, {}, 0.0});
    }
  }
  for (auto& s : series) s.runs.resize(spec.runs);
  std::vector<std::vector<double>> label_seconds(series.size(),
                                                 std::vector<double>(spec.runs));

  const auto worker = [&](int run_index) {
    const std::uint64_t run_seed = run_seed_for(spec.seed, run_index);
    std::vector<MeasurementBatch> batches(config.scan_count);
    for (int k = 0; k < config.scan_count; ++k) {
      batches[k] = generate_batch(truth[k], config.network, config.shape,
                                  config.lambda, run_seed, k);
    }
    const PriorDraw prior = sample_priors(config, truth[0], run_seed);
    for (std::size_t si = 0; si < series.size(); ++si) {
      auto& s = series[si];
      const auto t0 = std::chrono::steady_clock::now();
      if (s.iterations == 0) {
        s.runs[run_index] = detail::run_central_once(config, truth, batches, prior);
      } else {
        s.runs[run_index] = detail::run_distributed_once(config, truth, batches,
                                                         prior, s.iterations);
      }
      label_seconds[si][run_index] =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
    }
  };

  int thread_count = spec.threads > 0
                         ? spec.threads
                         : static_cast<int>(std::thread::hardware_concurrency());
  thread_count = std::max(1, std::min(thread_count, spec.runs));
  if (thread_count == 1) {
    for (int r = 0; r < spec.runs; ++r) worker(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int t = 0; t < thread_count; ++t) {
      pool.emplace_back([&] {
        while (true) {
          const int r = next.fetch_add(1);
          if (r >= spec.runs) break;
          worker(r);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  ResultTable table;
  table.runs_requested = spec.runs;
  table.scan_count = config.scan_count;
  for (const auto& s : series) detail::append_rows(table, s, config);
  for (std::size_t si = 0; si < series.size(); ++si) {
    double mean_seconds = 0.0;
    for (double sec : label_seconds[si]) mean_seconds += sec;
    table.wall_clock_sec[series[si].label] = mean_seconds / spec.runs;
  }

  nlohmann::json accounting = nlohmann::json::array();
  for (const auto& a : table.accounting) {
    accounting.push_back({{"label", a.label},
                          {"completed", a.completed},
                          {"diverged", a.diverged},
                          {"diverged_runs", a.diverged_runs}});
  }
  const char* filter_name = spec.filter == FilterKind::central
                                ? "central"
                                : spec.filter == FilterKind::distributed
                                      ? "distributed"
                                      : "both";
  table.manifest = {{"scenario", to_json(config)},
                    {"filter", filter_name},
                    {"runs", spec.runs},
                    {"consensus_iters", spec.consensus_iters},
                    {"seed", spec.seed},
                    {"accounting", accounting}};
  return table;
}

/// Writes one delimiter-separated file per metric plus the run manifest.
/// All file contents are deterministic functions of (config, seed).
inline std::vector<std::string> export_results(const ResultTable& table,
                                               const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "'");

  const std::vector<std::string> metrics = {"gwd", "ospa", "acee_kin", "acee_ext"};
  std::vector<std::string> written;
  for (const auto& metric : metrics) {
    bool any = false;
    for (const auto& row : table.rows) {
      if (row.metric == metric) {
        any = true;
        break;
      }
    }
    // acee files only make sense for distributed output
    if (!any && (metric == "acee_kin" || metric == "acee_ext")) continue;
    const std::string path = (fs::path(dir) / (metric + ".csv")).string();
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "scan_time,L,metric,mean,stderr\n";
    for (const auto& row : table.rows) {
      if (row.metric != metric) continue;
      out << detail::format_double(row.scan_time) << ',' << row.iterations << ','
          << row.metric << ',' << detail::format_double(row.mean) << ','
          << detail::format_double(row.stderr_) << '\n';
    }
    written.push_back(path);
  }

  const std::string manifest_path = (fs::path(dir) / "manifest.json").string();
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw std::runtime_error("cannot write '" + manifest_path + "'");
  manifest << table.manifest.dump(2) << '\n';
  written.push_back(manifest_path);
  return written;
}

}  // namespace cvtrack
