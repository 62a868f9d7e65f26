#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fadesched/rng.hpp"

namespace fadesched {

// Maximum number of joint (channel-vector) outcomes that exact enumeration
// will visit before asking the caller to use the Monte-Carlo path.
inline constexpr std::uint64_t kEnumerationCap = 10'000'000;

// Relative tolerance under which two scores are treated as tied.
inline constexpr double kTieTolerance = 1e-12;

// True when `a` beats `b` by more than the tie tolerance.
bool strictly_greater(double a, double b);

/// Discrete channel-state space (packets per slot), strictly increasing.
class StateSpace {
 public:
  StateSpace() = default;
  explicit StateSpace(std::vector<int> values);

  const std::vector<int>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  int operator[](std::size_t i) const { return values_[i]; }
  int x_max() const { return values_.back(); }
  std::optional<std::size_t> index_of(int value) const;

  friend bool operator==(const StateSpace&, const StateSpace&) = default;

 private:
  std::vector<int> values_;
};

enum class EstimatorKind { Exact, Sum, AvgFloor, AvgCeil, Kernel };

const char* to_string(EstimatorKind kind);
EstimatorKind estimator_kind_from_string(const std::string& name);

// An estimate symbol. Exact estimators report the whole state vector; the
// aggregating estimators report a single integer; kernels report a label.
using EstimateSymbol = std::vector<int>;

/// Stochastic estimator: for each joint state vector, a pmf over labels.
struct KernelTable {
  std::map<std::vector<int>, std::vector<std::pair<int, double>>> rows;

  friend bool operator==(const KernelTable&, const KernelTable&) = default;
};

struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Exact;
  KernelTable kernel;  // used only by EstimatorKind::Kernel

  bool deterministic() const { return kind != EstimatorKind::Kernel; }

  friend bool operator==(const EstimatorSpec&, const EstimatorSpec&) = default;
};

struct SlotSample {
  std::vector<int> x;  // channel states, one per channel
  EstimateSymbol s;
};

/// One user's channels: independent per-channel marginals plus the estimator
/// that maps the realized state vector to what the scheduler observes.
class UserChannelModel {
 public:
  UserChannelModel(StateSpace states, std::vector<std::vector<double>> marginals,
                   EstimatorSpec estimator);

  const StateSpace& states() const { return states_; }
  std::size_t channels() const { return marginals_.size(); }
  const std::vector<std::vector<double>>& marginals() const { return marginals_; }
  const EstimatorSpec& estimator() const { return estimator_; }

  // Joint outcomes |X|^M, saturating at UINT64_MAX.
  std::uint64_t joint_outcomes() const;

  // Symbol of a deterministic estimator for the given state values.
  EstimateSymbol estimate(std::span<const int> x) const;

  // Estimator pmf for the given state values (point mass when deterministic).
  std::vector<std::pair<EstimateSymbol, double>> estimate_pmf(std::span<const int> x) const;

  SlotSample sample_slot(Rng& rng) const;

  // Sample only the state vector, writing state indices into `x_idx`.
  void sample_states(Rng& rng, std::span<std::size_t> x_idx) const;

  friend bool operator==(const UserChannelModel&, const UserChannelModel&) = default;

 private:
  StateSpace states_;
  std::vector<std::vector<double>> marginals_;
  std::vector<std::vector<double>> cdf_;
  EstimatorSpec estimator_;
};

SlotSample sample_slot(const UserChannelModel& model, Rng& rng);

/// Rate chosen for one channel under one estimate.
struct RateChoice {
  int rate = 0;
  double success_prob = 1.0;
  double expected() const { return success_prob * rate; }
};

/// Conditional statistics for one user: P_S(s) and P(X_j >= x | S = s).
/// Immutable once built.
class ConditionalStats {
 public:
  ConditionalStats(StateSpace states, std::size_t channels, std::vector<EstimateSymbol> symbols,
                   std::vector<double> p_s, std::vector<double> ccdf);

  const StateSpace& states() const { return states_; }
  std::size_t channels() const { return channels_; }
  std::size_t symbol_count() const { return symbols_.size(); }
  const std::vector<EstimateSymbol>& symbols() const { return symbols_; }
  const EstimateSymbol& symbol(std::size_t s) const { return symbols_[s]; }
  double p_s(std::size_t s) const { return p_s_[s]; }
  const std::vector<double>& p_s() const { return p_s_; }

  std::optional<std::size_t> find(const EstimateSymbol& symbol) const;
  // Throws UnknownEstimate.
  std::size_t index_of(const EstimateSymbol& symbol) const;

  // P(X_j >= states[x_idx] | S = symbol s).
  double ccdf(std::size_t channel, std::size_t s, std::size_t x_idx) const {
    return ccdf_[(s * channels_ + channel) * states_.size() + x_idx];
  }
  // P(X_j >= rate | s) for any integer rate, including rates outside the
  // state space.
  double success_prob(std::size_t channel, std::size_t s, int rate) const;
  const RateChoice& r_star(std::size_t channel, std::size_t s) const {
    return r_star_[s * channels_ + channel];
  }
  // c(s): sum over channels of the expected r* goodput.
  double vertex_rate(std::size_t s) const { return vertex_[s]; }
  // E_S[c(S)].
  double mean_vertex_rate() const;

 private:
  StateSpace states_;
  std::size_t channels_;
  std::vector<EstimateSymbol> symbols_;
  std::vector<double> p_s_;
  std::vector<double> ccdf_;
  std::vector<RateChoice> r_star_;
  std::vector<double> vertex_;
  std::map<EstimateSymbol, std::size_t> index_;
};

/// Exact tables by full enumeration. Throws EnumerationTooLarge.
ConditionalStats derive_conditional_stats(const UserChannelModel& model);

/// Empirical tables from `n_samples` draws; unseen symbols are absent.
ConditionalStats estimate_conditional_stats(const UserChannelModel& model, std::uint64_t n_samples,
                                            std::uint64_t seed);

/// Argmax over x of P(X >= x | s) * x, smallest x among ties.
RateChoice r_star(const ConditionalStats& stats, std::size_t channel, const EstimateSymbol& s);
double vertex_rates(const ConditionalStats& stats, const EstimateSymbol& s);

/// Same argmax computed directly from a ccdf column over the state space.
RateChoice best_rate(const StateSpace& states, std::span<const double> ccdf_column);

/// All users of a downlink cell. Every user shares the state space, the
/// channel count and the estimator kind.
struct SystemModel {
  StateSpace states;
  std::size_t channels = 0;
  EstimatorSpec estimator;
  std::vector<UserChannelModel> users;

  std::size_t user_count() const { return users.size(); }

  friend bool operator==(const SystemModel&, const SystemModel&) = default;
};

std::vector<ConditionalStats> derive_all_stats(const SystemModel& model);

SystemModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const SystemModel& model);

// Convenience: every user and channel share `marginal`.
SystemModel make_symmetric_model(std::size_t users, std::size_t channels, StateSpace states,
                                 const std::vector<double>& marginal, EstimatorSpec estimator);

}  // namespace fadesched
