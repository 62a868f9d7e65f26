#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "fadesched/errors.hpp"
#include "fadesched/experiment.hpp"

namespace {

constexpr int kValidationExit = 2;
constexpr int kRuntimeExit = 3;

std::ofstream open_output(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fadesched::fail(fadesched::ErrorKind::Io, "cannot write " + path);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-channel downlink scheduling with partial channel information"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::optional<std::int64_t> horizon;
  std::size_t jobs = 1;
  auto* run_cmd = app.add_subcommand("run", "Run a sweep and write one CSV row per replication");
  run_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run_cmd->add_option("--horizon", horizon, "Override the horizon in slots");
  run_cmd->add_option("--jobs", jobs, "Parallel replications (0: one per core)");
  run_cmd->add_option("--out", out_path, "CSV output path")->required();

  std::vector<double> lambda;
  auto* analyze_cmd = app.add_subcommand("analyze", "Region membership, boundary scale and delay bound");
  analyze_cmd->add_option("--config", config_path, "Experiment config (JSON)")->required();
  analyze_cmd->add_option("--out", out_path, "JSON report path (default: stdout)");
  analyze_cmd->add_option("--lambda", lambda,
                          "Arrival means: one per user, or one value for the swept users");

  std::string preset_name;
  bool full = false;
  auto* preset_cmd = app.add_subcommand("preset", "Print a preset config as JSON");
  preset_cmd->add_option("name", preset_name, "fig1, fig2, fig3 or example3a")->required();
  preset_cmd->add_flag("--full", full, "Use full-length horizons");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationExit;
  }

  try {
    if (*run_cmd) {
      auto config = fadesched::load_config(config_path);
      if (horizon) {
        config.horizon = *horizon;
        config.validate();
      }
      if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
      const auto rows = fadesched::run_sweep(config, jobs);
      auto out = open_output(out_path);
      fadesched::write_csv(out, config, rows);
    } else if (*analyze_cmd) {
      const auto config = fadesched::load_config(config_path);
      std::optional<std::vector<double>> override;
      if (!lambda.empty()) {
        const std::size_t n = config.users();
        if (lambda.size() == n) {
          override = lambda;
        } else if (lambda.size() == 1) {
          std::vector<double> means;
          for (const auto& a : config.arrivals) means.push_back(a.mean);
          if (config.sweep) {
            for (std::size_t u : config.sweep->users) means[u] = lambda[0];
          } else {
            means.assign(n, lambda[0]);
          }
          override = means;
        } else {
          fadesched::fail(fadesched::ErrorKind::Validation, "--lambda needs one value or one per user");
        }
      }
      const auto report = fadesched::analyze(config, override).dump(2);
      if (out_path.empty()) {
        std::cout << report << '\n';
      } else {
        open_output(out_path) << report << '\n';
      }
    } else if (*preset_cmd) {
      std::cout << fadesched::config_to_json(fadesched::preset(preset_name, full)).dump(2) << '\n';
    }
  } catch (const fadesched::Error& e) {
    std::cerr << "fadesched: " << e.what() << '\n';
    return e.is_validation() ? kValidationExit : kRuntimeExit;
  } catch (const std::exception& e) {
    std::cerr << "fadesched: " << e.what() << '\n';
    return kRuntimeExit;
  }
  return 0;
}
