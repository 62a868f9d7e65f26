#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadesched/channel_model.hpp"
#include "fadesched/rng.hpp"

namespace fadesched {

struct ChannelGrant {
  std::optional<std::size_t> user;  // nullopt: channel left idle
  int rate = 0;

  friend bool operator==(const ChannelGrant&, const ChannelGrant&) = default;
};

/// Per-slot decision: at most one user per channel, with its rate.
struct Allocation {
  std::vector<ChannelGrant> channels;

  friend bool operator==(const Allocation&, const Allocation&) = default;
};

/// Stationary randomized weights gamma^s over users, one sub-distribution per
/// joint estimate. Stored either as an explicit table over the joint symbol
/// space or as a mixture of priority rules (with probability p, serve
/// argmax_i w_i c_i(s_i)).
class StatWeights {
 public:
  struct PriorityRule {
    double probability = 0.0;
    std::vector<double> weights;
  };

  static StatWeights zero(std::size_t users);
  // `gamma` is row-major (joint symbol, user); joint index is mixed radix
  // with user 0 as the least significant digit.
  static StatWeights table(std::vector<std::size_t> radices, std::vector<double> gamma);
  static StatWeights mixture(std::size_t users, std::vector<PriorityRule> rules);

  std::size_t users() const { return users_; }
  bool is_table() const { return !radices_.empty(); }
  const std::vector<PriorityRule>& rules() const { return rules_; }

  std::vector<double> distribution(std::span<const std::size_t> symbols,
                                   std::span<const ConditionalStats> stats) const;

  nlohmann::json to_json() const;
  static StatWeights from_json(const nlohmann::json& j);

 private:
  std::size_t users_ = 0;
  std::vector<std::size_t> radices_;
  std::vector<double> table_;
  std::vector<PriorityRule> rules_;
};

// Winner of a priority rule at the given symbols, or nullopt when every
// weighted vertex rate is zero.
std::optional<std::size_t> priority_winner(std::span<const double> weights,
                                           std::span<const std::size_t> symbols,
                                           std::span<const ConditionalStats> stats);

Allocation mw_decide(std::span<const double> weights, std::span<const std::size_t> symbols,
                     std::span<const ConditionalStats> stats);

Allocation imw_decide(std::span<const double> weights, std::span<const std::size_t> symbols,
                      std::span<const ConditionalStats> stats);

// Same rule as mw_decide with frame-frozen weights mixing virtual and real
// queues.
Allocation qmw_decide(std::span<const double> phi, std::span<const std::size_t> symbols,
                      std::span<const ConditionalStats> stats);

Allocation stat_decide(const StatWeights& gamma, std::span<const std::size_t> symbols,
                       std::span<const ConditionalStats> stats, Rng& rng);

enum class Rounding { Floor, Ceil };

const char* to_string(Rounding rounding);
Rounding rounding_from_string(const std::string& name);

// What a naive scheduler believes each channel's state to be, derived from
// the fed-back symbol by trusting it (sum feedback is averaged and rounded).
std::vector<int> naive_channel_estimates(EstimatorKind kind, std::size_t channels,
                                         const EstimateSymbol& symbol, Rounding rounding);

Allocation naive_mw_decide(std::span<const double> weights,
                           std::span<const std::vector<int>> believed_states);

Allocation naive_imw_decide(std::span<const double> weights,
                            std::span<const std::vector<int>> believed_states);

enum class PolicyKind { Mw, Imw, Stat, NaiveMw, NaiveImw, Qmw };

const char* to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(const std::string& name);

struct PolicySpec {
  PolicyKind kind = PolicyKind::Mw;
  Rounding rounding = Rounding::Floor;  // naive policies only
  std::string gamma_file;               // stat only; empty: solve the region LP

  std::string label() const;
  nlohmann::json to_json() const;
  static PolicySpec from_json(const nlohmann::json& j);

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

/// Dispatches one PolicySpec. Stateless apart from the STAT weights.
class Scheduler {
 public:
  Scheduler(PolicySpec spec, EstimatorKind estimator, std::size_t channels,
            std::optional<StatWeights> gamma = std::nullopt);

  const PolicySpec& spec() const { return spec_; }

  Allocation decide(std::span<const double> weights, std::span<const std::size_t> symbols,
                    std::span<const EstimateSymbol> keys, std::span<const ConditionalStats> stats,
                    Rng& rng) const;

 private:
  PolicySpec spec_;
  EstimatorKind estimator_;
  std::size_t channels_;
  std::optional<StatWeights> gamma_;
};

}  // namespace fadesched
