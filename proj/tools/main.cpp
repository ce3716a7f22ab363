// Batch experiment driver for the coupled-velocity tracking library.
//
// Subcommands:
//   run              execute a Monte Carlo campaign for a scenario
//   sweep-L          run the distributed filter across consensus iterations
//   validate-config  parse and validate a scenario, print the resolved JSON
//   list-scenarios   list the built-in scenarios
//
// Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 runtime error.

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <string>

#include "cvtrack/campaign.hpp"

namespace {

std::string default_out_dir() {
  const char* env = std::getenv("CVTRACK_OUT");
  return env != nullptr ? std::string(env) : std::string("results");
}

cvtrack::FilterKind parse_filter(const std::string& name) {
  if (name == "central") return cvtrack::FilterKind::central;
  if (name == "distributed") return cvtrack::FilterKind::distributed;
  if (name == "both") return cvtrack::FilterKind::both;
  throw cvtrack::ConfigError("unknown filter '" + name + "'");
}

int execute_campaign(const cvtrack::RunSpec& spec) {
  const cvtrack::ResultTable table = cvtrack::run_campaign(spec);
  const auto files = cvtrack::export_results(table, spec.out_dir);
  for (const auto& acc : table.accounting) {
    std::cout << acc.label << ": completed " << acc.completed << "/"
              << table.runs_requested;
    if (acc.diverged > 0) {
      std::cout << " (diverged " << acc.diverged << ": runs";
      for (int r : acc.diverged_runs) std::cout << ' ' << r;
      std::cout << ")";
    }
    const auto it = table.wall_clock_sec.find(acc.label);
    if (it != table.wall_clock_sec.end()) {
      std::cout << ", mean wall clock per run " << it->second << " s";
    }
    std::cout << '\n';
  }
  for (const auto& f : files) std::cout << "wrote " << f << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Coupled-velocity extended object tracking experiments"};
  app.require_subcommand(1);

  cvtrack::RunSpec spec;
  spec.out_dir = default_out_dir();
  std::string filter_name = "central";

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--scenario", spec.scenario,
                    "Built-in scenario name or path to a scenario JSON file");
    cmd->add_option("--runs", spec.runs, "Monte Carlo runs")->check(CLI::PositiveNumber);
    cmd->add_option("--seed", spec.seed, "Base seed; per-run seeds are derived");
    cmd->add_option("--out", spec.out_dir, "Output directory");
    cmd->add_option("--threads", spec.threads, "Worker threads (0 = hardware)");
    cmd->add_option("--consensus-iters", spec.consensus_iters,
                    "Consensus iteration counts (comma separated)")
        ->delimiter(',');
  };

  CLI::App* run = app.add_subcommand("run", "Execute a campaign");
  add_common(run);
  run->add_option("--filter", filter_name, "central, distributed, or both");

  CLI::App* sweep = app.add_subcommand("sweep-L", "Sweep consensus iterations");
  add_common(sweep);

  std::string validate_scenario = "s1";
  CLI::App* validate = app.add_subcommand("validate-config",
                                          "Validate a scenario and print it");
  validate->add_option("--scenario", validate_scenario,
                       "Built-in scenario name or path to a scenario JSON file");

  CLI::App* list = app.add_subcommand("list-scenarios", "List built-in scenarios");

  CLI11_PARSE(app, argc, argv);

  try {
    if (list->parsed()) {
      for (const auto& name : cvtrack::builtin_scenarios()) {
        std::cout << name << '\n';
      }
      return 0;
    }
    if (validate->parsed()) {
      const cvtrack::ScenarioConfig config =
          cvtrack::resolve_scenario(validate_scenario);
      std::cout << cvtrack::to_json(config).dump(2) << '\n';
      return 0;
    }
    if (run->parsed()) {
      spec.filter = parse_filter(filter_name);
      return execute_campaign(spec);
    }
    if (sweep->parsed()) {
      spec.filter = cvtrack::FilterKind::distributed;
      return execute_campaign(spec);
    }
  } catch (const cvtrack::ConfigError& e) {
    std::cerr << "error: config: " << e.what() << '\n';
    return 2;
  } catch (const std::ios_base::failure& e) {
    std::cerr << "error: io: " << e.what() << '\n';
    return 3;
  } catch (const std::runtime_error& e) {
    const std::string what = e.what();
    if (what.find("cannot create output") != std::string::npos ||
        what.find("cannot write") != std::string::npos) {
      std::cerr << "error: io: " << what << '\n';
      return 3;
    }
    std::cerr << "error: runtime: " << what << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: runtime: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
