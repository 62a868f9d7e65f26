#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadesched/arrivals.hpp"
#include "fadesched/channel_model.hpp"
#include "fadesched/dynamics.hpp"
#include "fadesched/policy.hpp"

namespace fadesched {

/// Sweep over arrival means: each value replaces the mean of the listed users.
struct SweepSpec {
  std::vector<double> values;
  std::vector<std::size_t> users;

  friend bool operator==(const SweepSpec&, const SweepSpec&) = default;
};

struct ExperimentConfig {
  std::string id = "experiment";
  SystemModel model;
  std::string model_file;  // kept for serialization when the model came from a file
  std::vector<PolicySpec> policies;
  std::vector<ArrivalSpec> arrivals;
  std::optional<SweepSpec> sweep;
  std::int64_t horizon = 100'000;
  double warmup_fraction = 0.1;
  std::vector<std::uint64_t> seeds{1};
  std::vector<std::int64_t> initial_backlog;
  std::optional<QosSetup> qos;  // present: frame mode

  bool frame_mode() const { return qos.has_value(); }
  std::size_t users() const { return model.user_count(); }
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// `base` resolves a relative model_file.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

const std::vector<std::string>& preset_names();
// Desk-scale horizons unless `full`.
ExperimentConfig preset(const std::string& name, bool full = false);

// Arrival laws for one sweep point (the configured laws when there is no sweep).
std::vector<ArrivalSpec> arrivals_at(const ExperimentConfig& config, std::size_t sweep_index);
std::size_t sweep_points(const ExperimentConfig& config);

struct SweepRow {
  std::size_t sweep_index = 0;
  double lambda = 0.0;
  std::size_t policy_index = 0;
  std::uint64_t seed = 0;
  MetricsLog metrics;
};

// One row per (sweep value, policy, seed), in that order, whatever `jobs` is.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, std::size_t jobs = 1);

void write_csv(std::ostream& out, const ExperimentConfig& config, const std::vector<SweepRow>& rows);

// Region report for the config's arrival means, or for `lambda` if given.
nlohmann::json analyze(const ExperimentConfig& config, const std::optional<std::vector<double>>& lambda = {});

}  // namespace fadesched
