#include "fadesched/policy.hpp"

#include <algorithm>
#include <cmath>

#include "fadesched/errors.hpp"

namespace fadesched {

namespace {

constexpr double kSubDistributionSlack = 1e-9;

void check_weights(std::span<const double> weights, std::size_t users) {
  if (weights.size() != users) fail(ErrorKind::Validation, "one weight per user is required");
  for (double w : weights) {
    if (!(w >= 0.0)) fail(ErrorKind::Validation, "weights must be non-negative");
  }
}

// One round of the per-channel argmax of weight * success * rate.
ChannelGrant best_for_channel(std::span<const double> weights, std::span<const std::size_t> symbols,
                              std::span<const ConditionalStats> stats, std::size_t channel) {
  std::size_t best_user = 0;
  const RateChoice* best = &stats[0].r_star(channel, symbols[0]);
  double best_score = weights[0] * best->expected();
  for (std::size_t i = 1; i < stats.size(); ++i) {
    const RateChoice& choice = stats[i].r_star(channel, symbols[i]);
    const double score = weights[i] * choice.expected();
    if (strictly_greater(score, best_score)) {
      best_user = i;
      best = &choice;
      best_score = score;
    }
  }
  return {best_user, best->rate};
}

void check_decision_inputs(std::span<const double> weights, std::span<const std::size_t> symbols,
                           std::span<const ConditionalStats> stats) {
  if (stats.empty()) fail(ErrorKind::Validation, "no users");
  check_weights(weights, stats.size());
  if (symbols.size() != stats.size()) fail(ErrorKind::Validation, "one estimate per user is required");
  for (std::size_t i = 0; i < stats.size(); ++i) {
    if (symbols[i] >= stats[i].symbol_count()) {
      fail(ErrorKind::UnknownEstimate, "estimate index out of range for user " + std::to_string(i));
    }
  }
}

std::size_t joint_index(std::span<const std::size_t> symbols, std::span<const std::size_t> radices) {
  std::size_t index = 0;
  for (std::size_t i = radices.size(); i-- > 0;) index = index * radices[i] + symbols[i];
  return index;
}

}  // namespace

StatWeights StatWeights::zero(std::size_t users) { return mixture(users, {}); }

StatWeights StatWeights::table(std::vector<std::size_t> radices, std::vector<double> gamma) {
  StatWeights out;
  out.users_ = radices.size();
  std::size_t joint = 1;
  for (std::size_t r : radices) joint *= r;
  if (out.users_ == 0 || gamma.size() != joint * out.users_) {
    fail(ErrorKind::Validation, "gamma table has the wrong size");
  }
  for (std::size_t s = 0; s < joint; ++s) {
    double total = 0.0;
    for (std::size_t i = 0; i < out.users_; ++i) {
      double& g = gamma[s * out.users_ + i];
      if (g < 0.0 && g > -kSubDistributionSlack) g = 0.0;
      if (!(g >= 0.0)) fail(ErrorKind::Validation, "gamma entries must be non-negative");
      total += g;
    }
    if (total > 1.0 + kSubDistributionSlack) {
      fail(ErrorKind::Validation, "gamma row sums to more than one");
    }
  }
  out.radices_ = std::move(radices);
  out.table_ = std::move(gamma);
  return out;
}

StatWeights StatWeights::mixture(std::size_t users, std::vector<PriorityRule> rules) {
  StatWeights out;
  out.users_ = users;
  double total = 0.0;
  for (auto& rule : rules) {
    if (rule.probability < 0.0 && rule.probability > -kSubDistributionSlack) rule.probability = 0.0;
    if (!(rule.probability >= 0.0)) fail(ErrorKind::Validation, "rule probability must be >= 0");
    if (rule.weights.size() != users) fail(ErrorKind::Validation, "rule needs one weight per user");
    total += rule.probability;
  }
  if (total > 1.0 + kSubDistributionSlack) fail(ErrorKind::Validation, "rule probabilities exceed one");
  out.rules_ = std::move(rules);
  return out;
}

std::optional<std::size_t> priority_winner(std::span<const double> weights,
                                           std::span<const std::size_t> symbols,
                                           std::span<const ConditionalStats> stats) {
  std::optional<std::size_t> winner;
  double best = 0.0;
  for (std::size_t i = 0; i < stats.size(); ++i) {
    const double value = weights[i] * stats[i].vertex_rate(symbols[i]);
    if (value > best) {
      best = value;
      winner = i;
    }
  }
  return winner;
}

std::vector<double> StatWeights::distribution(std::span<const std::size_t> symbols,
                                              std::span<const ConditionalStats> stats) const {
  if (symbols.size() != users_) fail(ErrorKind::Validation, "one estimate per user is required");
  std::vector<double> out(users_, 0.0);
  if (is_table()) {
    for (std::size_t i = 0; i < users_; ++i) {
      if (symbols[i] >= radices_[i]) fail(ErrorKind::UnknownEstimate, "estimate not in gamma table");
    }
    const std::size_t row = joint_index(symbols, radices_);
    std::copy_n(table_.begin() + static_cast<std::ptrdiff_t>(row * users_), users_, out.begin());
    return out;
  }
  for (const auto& rule : rules_) {
    if (auto winner = priority_winner(rule.weights, symbols, stats)) out[*winner] += rule.probability;
  }
  return out;
}

nlohmann::json StatWeights::to_json() const {
  if (is_table()) {
    return {{"kind", "table"}, {"users", users_}, {"radices", radices_}, {"gamma", table_}};
  }
  auto rules = nlohmann::json::array();
  for (const auto& rule : rules_) {
    rules.push_back({{"probability", rule.probability}, {"weights", rule.weights}});
  }
  return {{"kind", "mixture"}, {"users", users_}, {"rules", rules}};
}

StatWeights StatWeights::from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "table") {
      return table(j.at("radices").get<std::vector<std::size_t>>(),
                   j.at("gamma").get<std::vector<double>>());
    }
    if (kind == "mixture") {
      std::vector<PriorityRule> rules;
      for (const auto& r : j.at("rules")) {
        rules.push_back({r.at("probability").get<double>(), r.at("weights").get<std::vector<double>>()});
      }
      return mixture(j.at("users").get<std::size_t>(), std::move(rules));
    }
    fail(ErrorKind::Validation, "unknown gamma kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Validation, std::string("gamma: ") + e.what());
  }
}

Allocation mw_decide(std::span<const double> weights, std::span<const std::size_t> symbols,
                     std::span<const ConditionalStats> stats) {
  check_decision_inputs(weights, symbols, stats);
  Allocation out;
  const std::size_t m = stats[0].channels();
  out.channels.reserve(m);
  for (std::size_t j = 0; j < m; ++j) out.channels.push_back(best_for_channel(weights, symbols, stats, j));
  return out;
}

Allocation imw_decide(std::span<const double> weights, std::span<const std::size_t> symbols,
                      std::span<const ConditionalStats> stats) {
  check_decision_inputs(weights, symbols, stats);
  std::vector<double> virtual_weights(weights.begin(), weights.end());
  Allocation out;
  const std::size_t m = stats[0].channels();
  out.channels.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    ChannelGrant grant = best_for_channel(virtual_weights, symbols, stats, j);
    double& w = virtual_weights[*grant.user];
    w = std::max(0.0, w - grant.rate);
    out.channels.push_back(grant);
  }
  return out;
}

Allocation qmw_decide(std::span<const double> phi, std::span<const std::size_t> symbols,
                      std::span<const ConditionalStats> stats) {
  return mw_decide(phi, symbols, stats);
}

Allocation stat_decide(const StatWeights& gamma, std::span<const std::size_t> symbols,
                       std::span<const ConditionalStats> stats, Rng& rng) {
  if (gamma.users() != stats.size()) fail(ErrorKind::Validation, "gamma has the wrong user count");
  const std::vector<double> dist = gamma.distribution(symbols, stats);
  double u = uniform01(rng);
  std::optional<std::size_t> chosen;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (u < dist[i]) {
      chosen = i;
      break;
    }
    u -= dist[i];
  }
  Allocation out;
  const std::size_t m = stats[0].channels();
  out.channels.resize(m);
  if (chosen) {
    for (std::size_t j = 0; j < m; ++j) {
      out.channels[j] = {*chosen, stats[*chosen].r_star(j, symbols[*chosen]).rate};
    }
  }
  return out;
}

const char* to_string(Rounding rounding) { return rounding == Rounding::Floor ? "floor" : "ceil"; }

Rounding rounding_from_string(const std::string& name) {
  if (name == "floor") return Rounding::Floor;
  if (name == "ceil") return Rounding::Ceil;
  fail(ErrorKind::Validation, "unknown rounding '" + name + "'");
}

std::vector<int> naive_channel_estimates(EstimatorKind kind, std::size_t channels,
                                         const EstimateSymbol& symbol, Rounding rounding) {
  switch (kind) {
    case EstimatorKind::Exact:
      return symbol;
    case EstimatorKind::Sum: {
      const int m = static_cast<int>(channels);
      const int avg = rounding == Rounding::Floor ? symbol.at(0) / m : (symbol.at(0) + m - 1) / m;
      return std::vector<int>(channels, avg);
    }
    case EstimatorKind::AvgFloor:
    case EstimatorKind::AvgCeil:
      return std::vector<int>(channels, symbol.at(0));
    case EstimatorKind::Kernel:
      break;
  }
  fail(ErrorKind::Validation, "naive policies need a deterministic feedback estimator");
}

namespace {

Allocation naive_decide(std::span<const double> weights, std::span<const std::vector<int>> believed,
                        bool iterative) {
  if (believed.empty()) fail(ErrorKind::Validation, "no users");
  check_weights(weights, believed.size());
  const std::size_t m = believed[0].size();
  std::vector<double> w(weights.begin(), weights.end());
  Allocation out;
  out.channels.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    std::size_t best = 0;
    double best_score = w[0] * believed[0][j];
    for (std::size_t i = 1; i < believed.size(); ++i) {
      const double score = w[i] * believed[i][j];
      if (strictly_greater(score, best_score)) {
        best = i;
        best_score = score;
      }
    }
    const int rate = believed[best][j];
    out.channels.push_back({best, rate});
    if (iterative) w[best] = std::max(0.0, w[best] - rate);
  }
  return out;
}

}  // namespace

Allocation naive_mw_decide(std::span<const double> weights,
                           std::span<const std::vector<int>> believed_states) {
  return naive_decide(weights, believed_states, false);
}

Allocation naive_imw_decide(std::span<const double> weights,
                            std::span<const std::vector<int>> believed_states) {
  return naive_decide(weights, believed_states, true);
}

const char* to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::Mw: return "mw";
    case PolicyKind::Imw: return "imw";
    case PolicyKind::Stat: return "stat";
    case PolicyKind::NaiveMw: return "naive_mw";
    case PolicyKind::NaiveImw: return "naive_imw";
    case PolicyKind::Qmw: return "qmw";
  }
  return "mw";
}

PolicyKind policy_kind_from_string(const std::string& name) {
  for (auto kind : {PolicyKind::Mw, PolicyKind::Imw, PolicyKind::Stat, PolicyKind::NaiveMw,
                    PolicyKind::NaiveImw, PolicyKind::Qmw}) {
    if (name == to_string(kind)) return kind;
  }
  fail(ErrorKind::Validation, "unknown policy '" + name + "'");
}

std::string PolicySpec::label() const {
  std::string out = to_string(kind);
  if (kind == PolicyKind::NaiveMw || kind == PolicyKind::NaiveImw) {
    out += std::string("_") + to_string(rounding);
  }
  return out;
}

nlohmann::json PolicySpec::to_json() const {
  nlohmann::json j{{"name", to_string(kind)}};
  if (kind == PolicyKind::NaiveMw || kind == PolicyKind::NaiveImw) j["rounding"] = to_string(rounding);
  if (kind == PolicyKind::Stat && !gamma_file.empty()) j["gamma_file"] = gamma_file;
  return j;
}

PolicySpec PolicySpec::from_json(const nlohmann::json& j) {
  PolicySpec spec;
  if (j.is_string()) {
    spec.kind = policy_kind_from_string(j.get<std::string>());
    return spec;
  }
  spec.kind = policy_kind_from_string(j.at("name").get<std::string>());
  if (j.contains("rounding")) spec.rounding = rounding_from_string(j.at("rounding").get<std::string>());
  if (j.contains("gamma_file")) spec.gamma_file = j.at("gamma_file").get<std::string>();
  return spec;
}

Scheduler::Scheduler(PolicySpec spec, EstimatorKind estimator, std::size_t channels,
                     std::optional<StatWeights> gamma)
    : spec_(std::move(spec)), estimator_(estimator), channels_(channels), gamma_(std::move(gamma)) {
  if (spec_.kind == PolicyKind::Stat && !gamma_) {
    fail(ErrorKind::Validation, "stat policy needs gamma weights");
  }
  if ((spec_.kind == PolicyKind::NaiveMw || spec_.kind == PolicyKind::NaiveImw) &&
      estimator_ == EstimatorKind::Kernel) {
    fail(ErrorKind::Validation, "naive policies need a deterministic feedback estimator");
  }
}

Allocation Scheduler::decide(std::span<const double> weights, std::span<const std::size_t> symbols,
                             std::span<const EstimateSymbol> keys,
                             std::span<const ConditionalStats> stats, Rng& rng) const {
  switch (spec_.kind) {
    case PolicyKind::Mw: return mw_decide(weights, symbols, stats);
    case PolicyKind::Imw: return imw_decide(weights, symbols, stats);
    case PolicyKind::Qmw: return qmw_decide(weights, symbols, stats);
    case PolicyKind::Stat: return stat_decide(*gamma_, symbols, stats, rng);
    case PolicyKind::NaiveMw:
    case PolicyKind::NaiveImw: {
      std::vector<std::vector<int>> believed;
      believed.reserve(keys.size());
      for (const auto& key : keys) {
        believed.push_back(naive_channel_estimates(estimator_, channels_, key, spec_.rounding));
      }
      return spec_.kind == PolicyKind::NaiveMw ? naive_mw_decide(weights, believed)
                                               : naive_imw_decide(weights, believed);
    }
  }
  fail(ErrorKind::Validation, "unhandled policy");
}

}  // namespace fadesched
