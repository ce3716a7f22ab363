#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cvtrack/campaign.hpp"
#include "helpers.hpp"

using namespace cvtrack;
using namespace cvtrack::testing;
namespace fs = std::filesystem;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "cvtrack_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write_small_scenario(const std::string& name,
                                 const std::string& base = "s1") {
  ScenarioConfig c = build_scenario(base);
  c.scan_count = 6;
  const fs::path path = fresh_dir(name) / "scenario.json";
  std::ofstream out(path);
  out << to_json(c).dump(2);
  out.close();
  return path.string();
}

}  // namespace

TEST_CASE("single central run produces one row per scan") {
  RunSpec spec;
  spec.scenario = "s1";
  spec.filter = FilterKind::central;
  spec.runs = 1;
  spec.seed = 5;
  const ResultTable table = run_campaign(spec);

  int gwd_rows = 0;
  for (const auto& row : table.rows) {
    if (row.metric == "gwd") {
      REQUIRE(row.iterations == 0);
      ++gwd_rows;
    }
  }
  REQUIRE(gwd_rows == table.scan_count);
  REQUIRE(table.accounting.size() == 1);
  REQUIRE(table.accounting[0].completed + table.accounting[0].diverged == 1);
}

TEST_CASE("campaign output is byte-identical across reruns and thread counts") {
  RunSpec spec;
  spec.scenario = write_small_scenario("determinism");
  spec.filter = FilterKind::both;
  spec.runs = 4;
  spec.seed = 99;
  spec.consensus_iters = {1, 3};

  spec.threads = 1;
  const fs::path dir_a = fresh_dir("determinism_a");
  export_results(run_campaign(spec), dir_a.string());

  spec.threads = 2;
  const fs::path dir_b = fresh_dir("determinism_b");
  export_results(run_campaign(spec), dir_b.string());

  for (const auto* name : {"gwd.csv", "ospa.csv", "manifest.json"}) {
    REQUIRE(read_file((dir_a / name).string()) ==
            read_file((dir_b / name).string()));
  }
}

TEST_CASE("empty table exports header-only files") {
  ResultTable empty;
  empty.manifest = {{"note", "empty"}};
  const fs::path dir = fresh_dir("empty");
  export_results(empty, dir.string());
  REQUIRE(read_file((dir / "gwd.csv").string()) ==
          "scan_time,L,metric,mean,stderr\n");
  REQUIRE(read_file((dir / "ospa.csv").string()) ==
          "scan_time,L,metric,mean,stderr\n");
  REQUIRE_FALSE(fs::exists(dir / "acee_kin.csv"));
}

TEST_CASE("aggregated mean and stderr match a direct recomputation") {
  const std::string scenario_path = write_small_scenario("stderr");
  RunSpec spec;
  spec.scenario = scenario_path;
  spec.filter = FilterKind::central;
  spec.runs = 3;
  spec.seed = 1234;
  const ResultTable table = run_campaign(spec);

  const ScenarioConfig config = resolve_scenario(scenario_path);
  const auto truth = build_truth(config);
  std::vector<std::vector<double>> gwd_series;
  for (int r = 0; r < spec.runs; ++r) {
    const std::uint64_t seed = run_seed_for(spec.seed, r);
    std::vector<MeasurementBatch> batches(config.scan_count);
    for (int k = 0; k < config.scan_count; ++k) {
      batches[k] = generate_batch(truth[k], config.network, config.shape,
                                  config.lambda, seed, k);
    }
    const PriorDraw prior = sample_priors(config, truth[0], seed);
    gwd_series.push_back(
        detail::run_central_once(config, truth, batches, prior).gwd);
  }

  for (const auto& row : table.rows) {
    if (row.metric != "gwd") continue;
    const int k = row.scan - 1;
    double mean = 0.0;
    for (int r = 0; r < spec.runs; ++r) mean += gwd_series[r][k];
    mean /= spec.runs;
    double var = 0.0;
    for (int r = 0; r < spec.runs; ++r) {
      var += (gwd_series[r][k] - mean) * (gwd_series[r][k] - mean);
    }
    var /= (spec.runs - 1);
    REQUIRE(row.mean == Catch::Approx(mean).margin(1e-12));
    REQUIRE(row.stderr_ ==
            Catch::Approx(std::sqrt(var / spec.runs)).margin(1e-12));
    REQUIRE(row.scan_time ==
            Catch::Approx(row.scan * config.dynamics.scan_period));
  }
}

TEST_CASE("manifest reruns to identical output") {
  RunSpec spec;
  spec.scenario = write_small_scenario("manifest", "s3");
  spec.filter = FilterKind::distributed;
  spec.runs = 2;
  spec.seed = 777;
  spec.consensus_iters = {2};
  const fs::path dir_a = fresh_dir("manifest_a");
  export_results(run_campaign(spec), dir_a.string());

  const nlohmann::json manifest =
      nlohmann::json::parse(read_file((dir_a / "manifest.json").string()));
  const fs::path scenario_copy = fresh_dir("manifest_copy") / "scenario.json";
  {
    std::ofstream out(scenario_copy);
    out << manifest["scenario"].dump(2);
  }
  RunSpec again;
  again.scenario = scenario_copy.string();
  again.filter = FilterKind::distributed;
  again.runs = manifest["runs"].get<int>();
  again.seed = manifest["seed"].get<std::uint64_t>();
  again.consensus_iters = manifest["consensus_iters"].get<std::vector<int>>();
  const fs::path dir_b = fresh_dir("manifest_b");
  export_results(run_campaign(again), dir_b.string());

  for (const auto* name : {"gwd.csv", "ospa.csv", "acee_kin.csv", "acee_ext.csv"}) {
    REQUIRE(read_file((dir_a / name).string()) ==
            read_file((dir_b / name).string()));
  }
}

TEST_CASE("diverged runs are flagged and excluded, never silently dropped") {
  // A prior carrying an indefinite information matrix trips the conditioning
  // guard on the first covariance evaluation.
  const ScenarioConfig config = [] {
    ScenarioConfig c = build_s1();
    c.scan_count = 4;
    return c;
  }();
  const auto truth = build_truth(config);
  const std::uint64_t seed = run_seed_for(3, 0);
  std::vector<MeasurementBatch> batches(config.scan_count);
  for (int k = 0; k < config.scan_count; ++k) {
    batches[k] = generate_batch(truth[k], config.network, config.shape,
                                config.lambda, seed, k);
  }
  PriorDraw prior = sample_priors(config, truth[0], seed);
  prior.central_kin.info = -Mat4::Identity();
  const detail::RunOutput bad =
      detail::run_central_once(config, truth, batches, prior);
  REQUIRE(bad.diverged);
  REQUIRE(bad.diverged_at == 1);

  // Aggregation counts the flagged run and keeps it out of the averages.
  detail::LabelledSeries series;
  series.label = "central";
  series.iterations = 0;
  detail::RunOutput good;
  good.gwd = {1.0, 2.0, 3.0, 4.0};
  good.ospa = {1.0, 1.0, 1.0, 1.0};
  detail::RunOutput diverged;
  diverged.diverged = true;
  diverged.diverged_at = 2;
  diverged.gwd = {100.0};
  diverged.ospa = {100.0};
  series.runs = {good, diverged, good};

  ResultTable table;
  table.runs_requested = 3;
  detail::append_rows(table, series, config);
  REQUIRE(table.accounting[0].completed == 2);
  REQUIRE(table.accounting[0].diverged == 1);
  REQUIRE(table.accounting[0].completed + table.accounting[0].diverged ==
          table.runs_requested);
  REQUIRE(table.accounting[0].diverged_runs == std::vector<int>{1});
  for (const auto& row : table.rows) {
    if (row.metric == "gwd" && row.scan == 1) {
      REQUIRE(row.mean == Catch::Approx(1.0));  // the 100.0 run is excluded
    }
  }
}

TEST_CASE("scenario resolution distinguishes names from files") {
  REQUIRE_THROWS_AS(resolve_scenario("no-such-scenario"), ConfigError);
  const ScenarioConfig builtin = resolve_scenario("s3");
  REQUIRE(builtin.network.size() == 9);
  const std::string path = write_small_scenario("resolve");
  const ScenarioConfig from_file = resolve_scenario(path);
  REQUIRE(from_file.scan_count == 6);
}
