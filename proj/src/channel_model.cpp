#include "fadesched/channel_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "fadesched/errors.hpp"

namespace fadesched {

bool strictly_greater(double a, double b) {
  return a - b > kTieTolerance * std::max(std::abs(a), std::abs(b));
}

StateSpace::StateSpace(std::vector<int> values) : values_(std::move(values)) {
  if (values_.empty()) fail(ErrorKind::Validation, "state space must be non-empty");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (values_[i] < 0) fail(ErrorKind::Validation, "state values must be non-negative");
    if (i > 0 && values_[i] <= values_[i - 1]) {
      fail(ErrorKind::Validation, "state space must be strictly increasing");
    }
  }
}

std::optional<std::size_t> StateSpace::index_of(int value) const {
  auto it = std::lower_bound(values_.begin(), values_.end(), value);
  if (it == values_.end() || *it != value) return std::nullopt;
  return static_cast<std::size_t>(it - values_.begin());
}

const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Exact: return "exact";
    case EstimatorKind::Sum: return "sum";
    case EstimatorKind::AvgFloor: return "avg_floor";
    case EstimatorKind::AvgCeil: return "avg_ceil";
    case EstimatorKind::Kernel: return "kernel";
  }
  return "exact";
}

EstimatorKind estimator_kind_from_string(const std::string& name) {
  if (name == "exact") return EstimatorKind::Exact;
  if (name == "sum") return EstimatorKind::Sum;
  if (name == "avg_floor" || name == "avg") return EstimatorKind::AvgFloor;
  if (name == "avg_ceil") return EstimatorKind::AvgCeil;
  if (name == "kernel") return EstimatorKind::Kernel;
  fail(ErrorKind::Validation, "unknown estimator kind '" + name + "'");
}

namespace {

constexpr double kPmfTolerance = 1e-12;
constexpr double kNormTolerance = 1e-9;

void check_pmf(const std::vector<double>& pmf, double tol, const std::string& what) {
  double total = 0.0;
  for (double p : pmf) {
    if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorKind::Validation, what + ": negative mass");
    total += p;
  }
  if (std::abs(total - 1.0) > tol) {
    fail(ErrorKind::Validation, what + ": masses sum to " + std::to_string(total));
  }
}

// Floor/ceil of a non-negative rational sum / m.
int div_floor(int sum, int m) { return sum / m; }
int div_ceil(int sum, int m) { return (sum + m - 1) / m; }

}  // namespace

UserChannelModel::UserChannelModel(StateSpace states, std::vector<std::vector<double>> marginals,
                                   EstimatorSpec estimator)
    : states_(std::move(states)), marginals_(std::move(marginals)), estimator_(std::move(estimator)) {
  if (marginals_.empty()) fail(ErrorKind::Validation, "a user needs at least one channel");
  cdf_.reserve(marginals_.size());
  for (std::size_t j = 0; j < marginals_.size(); ++j) {
    const auto& pmf = marginals_[j];
    if (pmf.size() != states_.size()) {
      fail(ErrorKind::Validation, "marginal of channel " + std::to_string(j) +
                                      " does not match the state space size");
    }
    check_pmf(pmf, kPmfTolerance, "marginal of channel " + std::to_string(j));
    std::vector<double> cdf(pmf.size());
    std::partial_sum(pmf.begin(), pmf.end(), cdf.begin());
    std::size_t last = pmf.size() - 1;
    while (last > 0 && pmf[last] == 0.0) --last;
    std::fill(cdf.begin() + static_cast<std::ptrdiff_t>(last), cdf.end(), 1.0);
    cdf_.push_back(std::move(cdf));
  }
  if (estimator_.kind == EstimatorKind::Kernel) {
    for (const auto& [x, row] : estimator_.kernel.rows) {
      if (x.size() != marginals_.size()) {
        fail(ErrorKind::Validation, "kernel row has the wrong number of channels");
      }
      std::vector<double> masses;
      for (const auto& [label, p] : row) masses.push_back(p);
      check_pmf(masses, kNormTolerance, "kernel row");
    }
  }
}

std::uint64_t UserChannelModel::joint_outcomes() const {
  std::uint64_t total = 1;
  for (std::size_t j = 0; j < channels(); ++j) {
    if (total > std::numeric_limits<std::uint64_t>::max() / states_.size()) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    total *= states_.size();
  }
  return total;
}

EstimateSymbol UserChannelModel::estimate(std::span<const int> x) const {
  const int m = static_cast<int>(x.size());
  const int sum = std::accumulate(x.begin(), x.end(), 0);
  switch (estimator_.kind) {
    case EstimatorKind::Exact: return EstimateSymbol(x.begin(), x.end());
    case EstimatorKind::Sum: return {sum};
    case EstimatorKind::AvgFloor: return {div_floor(sum, m)};
    case EstimatorKind::AvgCeil: return {div_ceil(sum, m)};
    case EstimatorKind::Kernel: break;
  }
  fail(ErrorKind::Validation, "kernel estimator has no deterministic symbol");
}

std::vector<std::pair<EstimateSymbol, double>> UserChannelModel::estimate_pmf(
    std::span<const int> x) const {
  if (estimator_.deterministic()) return {{estimate(x), 1.0}};
  auto it = estimator_.kernel.rows.find(std::vector<int>(x.begin(), x.end()));
  if (it == estimator_.kernel.rows.end()) {
    fail(ErrorKind::Validation, "kernel has no row for a reachable state vector");
  }
  std::vector<std::pair<EstimateSymbol, double>> out;
  for (const auto& [label, p] : it->second) {
    if (p > 0.0) out.push_back({{label}, p});
  }
  return out;
}

void UserChannelModel::sample_states(Rng& rng, std::span<std::size_t> x_idx) const {
  for (std::size_t j = 0; j < cdf_.size(); ++j) {
    const double u = uniform01(rng);
    const auto& cdf = cdf_[j];
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t k = static_cast<std::size_t>(it - cdf.begin());
    if (k >= cdf.size()) k = cdf.size() - 1;
    x_idx[j] = k;
  }
}

SlotSample UserChannelModel::sample_slot(Rng& rng) const {
  std::vector<std::size_t> idx(channels());
  sample_states(rng, idx);
  SlotSample out;
  out.x.resize(channels());
  for (std::size_t j = 0; j < channels(); ++j) out.x[j] = states_[idx[j]];
  if (estimator_.deterministic()) {
    out.s = estimate(out.x);
    return out;
  }
  const auto pmf = estimate_pmf(out.x);
  double u = uniform01(rng);
  out.s = pmf.back().first;
  for (const auto& [sym, p] : pmf) {
    if (u < p) {
      out.s = sym;
      break;
    }
    u -= p;
  }
  return out;
}

SlotSample sample_slot(const UserChannelModel& model, Rng& rng) { return model.sample_slot(rng); }

RateChoice best_rate(const StateSpace& states, std::span<const double> ccdf_column) {
  RateChoice best{states[0], ccdf_column[0]};
  double best_value = best.expected();
  for (std::size_t x = 1; x < states.size(); ++x) {
    const double value = ccdf_column[x] * states[x];
    if (strictly_greater(value, best_value)) {
      best = {states[x], ccdf_column[x]};
      best_value = value;
    }
  }
  return best;
}

ConditionalStats::ConditionalStats(StateSpace states, std::size_t channels,
                                   std::vector<EstimateSymbol> symbols, std::vector<double> p_s,
                                   std::vector<double> ccdf)
    : states_(std::move(states)),
      channels_(channels),
      symbols_(std::move(symbols)),
      p_s_(std::move(p_s)),
      ccdf_(std::move(ccdf)) {
  const std::size_t nx = states_.size();
  if (symbols_.empty() || p_s_.size() != symbols_.size() ||
      ccdf_.size() != symbols_.size() * channels_ * nx) {
    fail(ErrorKind::DegenerateStats, "inconsistent table dimensions");
  }
  double total = 0.0;
  for (double p : p_s_) {
    if (!(p > 0.0)) fail(ErrorKind::DegenerateStats, "estimate with non-positive probability");
    total += p;
  }
  if (std::abs(total - 1.0) > kNormTolerance) {
    fail(ErrorKind::DegenerateStats, "estimate pmf sums to " + std::to_string(total));
  }
  for (std::size_t s = 0; s < symbols_.size(); ++s) {
    if (!index_.emplace(symbols_[s], s).second) {
      fail(ErrorKind::DegenerateStats, "duplicate estimate symbol");
    }
  }
  r_star_.resize(symbols_.size() * channels_);
  vertex_.assign(symbols_.size(), 0.0);
  for (std::size_t s = 0; s < symbols_.size(); ++s) {
    for (std::size_t j = 0; j < channels_; ++j) {
      const std::span<const double> column(&ccdf_[(s * channels_ + j) * nx], nx);
      for (std::size_t x = 0; x < nx; ++x) {
        if (column[x] < -kNormTolerance || column[x] > 1.0 + kNormTolerance ||
            (x > 0 && column[x] > column[x - 1] + kNormTolerance)) {
          fail(ErrorKind::DegenerateStats, "ccdf column is not a valid survival function");
        }
      }
      r_star_[s * channels_ + j] = best_rate(states_, column);
      vertex_[s] += r_star_[s * channels_ + j].expected();
    }
  }
}

std::optional<std::size_t> ConditionalStats::find(const EstimateSymbol& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ConditionalStats::index_of(const EstimateSymbol& symbol) const {
  if (auto s = find(symbol)) return *s;
  std::string text = "[";
  for (std::size_t k = 0; k < symbol.size(); ++k) text += (k ? "," : "") + std::to_string(symbol[k]);
  fail(ErrorKind::UnknownEstimate, "estimate " + text + "] is not in the table");
}

double ConditionalStats::success_prob(std::size_t channel, std::size_t s, int rate) const {
  const auto& v = states_.values();
  auto it = std::lower_bound(v.begin(), v.end(), rate);
  if (it == v.end()) return 0.0;
  return ccdf(channel, s, static_cast<std::size_t>(it - v.begin()));
}

double ConditionalStats::mean_vertex_rate() const {
  double total = 0.0;
  for (std::size_t s = 0; s < symbols_.size(); ++s) total += p_s_[s] * vertex_[s];
  return total;
}

namespace {

// Accumulates joint masses P(S = s, X_j = x) and turns them into tables.
class StatsAccumulator {
 public:
  StatsAccumulator(const StateSpace& states, std::size_t channels)
      : states_(states), channels_(channels) {}

  void add(const EstimateSymbol& s, std::span<const std::size_t> x_idx, double mass) {
    auto [it, inserted] = rows_.try_emplace(s);
    auto& row = it->second;
    if (inserted) row.joint.assign(channels_ * states_.size(), 0.0);
    row.mass += mass;
    for (std::size_t j = 0; j < channels_; ++j) row.joint[j * states_.size() + x_idx[j]] += mass;
  }

  ConditionalStats finish() const {
    const std::size_t nx = states_.size();
    double total = 0.0;
    for (const auto& [s, row] : rows_) total += row.mass;
    std::vector<EstimateSymbol> symbols;
    std::vector<double> p_s;
    std::vector<double> ccdf;
    for (const auto& [s, row] : rows_) {
      if (!(row.mass > 0.0)) continue;
      symbols.push_back(s);
      p_s.push_back(row.mass / total);
      for (std::size_t j = 0; j < channels_; ++j) {
        std::vector<double> column(nx);
        double tail = 0.0;
        for (std::size_t x = nx; x-- > 0;) {
          tail += row.joint[j * nx + x];
          column[x] = std::min(1.0, tail / row.mass);
        }
        column[0] = 1.0;
        ccdf.insert(ccdf.end(), column.begin(), column.end());
      }
    }
    return ConditionalStats(states_, channels_, std::move(symbols), std::move(p_s),
                            std::move(ccdf));
  }

 private:
  struct Row {
    double mass = 0.0;
    std::vector<double> joint;
  };
  StateSpace states_;
  std::size_t channels_;
  std::map<EstimateSymbol, Row> rows_;
};

}  // namespace

ConditionalStats derive_conditional_stats(const UserChannelModel& model) {
  const std::uint64_t outcomes = model.joint_outcomes();
  if (outcomes > kEnumerationCap) {
    fail(ErrorKind::EnumerationTooLarge,
         std::to_string(outcomes) + " joint outcomes exceed the enumeration cap");
  }
  const auto& states = model.states();
  const std::size_t m = model.channels();
  StatsAccumulator acc(states, m);
  std::vector<std::size_t> idx(m, 0);
  std::vector<int> x(m);
  for (std::uint64_t n = 0; n < outcomes; ++n) {
    double prob = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      prob *= model.marginals()[j][idx[j]];
      x[j] = states[idx[j]];
    }
    if (prob > 0.0) {
      for (const auto& [sym, p] : model.estimate_pmf(x)) acc.add(sym, idx, prob * p);
    }
    for (std::size_t j = 0; j < m; ++j) {
      if (++idx[j] < states.size()) break;
      idx[j] = 0;
    }
  }
  return acc.finish();
}

ConditionalStats estimate_conditional_stats(const UserChannelModel& model, std::uint64_t n_samples,
                                            std::uint64_t seed) {
  if (n_samples == 0) fail(ErrorKind::Validation, "n_samples must be at least 1");
  Rng rng = make_stream(seed, 0);
  const auto& states = model.states();
  StatsAccumulator acc(states, model.channels());
  std::vector<std::size_t> idx(model.channels());
  for (std::uint64_t n = 0; n < n_samples; ++n) {
    const SlotSample sample = model.sample_slot(rng);
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = *states.index_of(sample.x[j]);
    acc.add(sample.s, idx, 1.0);
  }
  return acc.finish();
}

RateChoice r_star(const ConditionalStats& stats, std::size_t channel, const EstimateSymbol& s) {
  return stats.r_star(channel, stats.index_of(s));
}

double vertex_rates(const ConditionalStats& stats, const EstimateSymbol& s) {
  return stats.vertex_rate(stats.index_of(s));
}

std::vector<ConditionalStats> derive_all_stats(const SystemModel& model) {
  std::vector<ConditionalStats> out;
  out.reserve(model.users.size());
  for (const auto& user : model.users) out.push_back(derive_conditional_stats(user));
  return out;
}

SystemModel make_symmetric_model(std::size_t users, std::size_t channels, StateSpace states,
                                 const std::vector<double>& marginal, EstimatorSpec estimator) {
  SystemModel model;
  model.states = states;
  model.channels = channels;
  model.estimator = estimator;
  for (std::size_t i = 0; i < users; ++i) {
    model.users.emplace_back(states, std::vector<std::vector<double>>(channels, marginal),
                             estimator);
  }
  return model;
}

namespace {

EstimatorSpec estimator_from_json(const nlohmann::json& j) {
  EstimatorSpec spec;
  spec.kind = estimator_kind_from_string(j.at("kind").get<std::string>());
  if (spec.kind == EstimatorKind::Kernel) {
    for (const auto& row : j.at("rows")) {
      std::vector<std::pair<int, double>> pmf;
      for (const auto& entry : row.at("pmf")) {
        pmf.emplace_back(entry.at(0).get<int>(), entry.at(1).get<double>());
      }
      spec.kernel.rows[row.at("x").get<std::vector<int>>()] = std::move(pmf);
    }
  }
  return spec;
}

nlohmann::json estimator_to_json(const EstimatorSpec& spec) {
  nlohmann::json j{{"kind", to_string(spec.kind)}};
  if (spec.kind == EstimatorKind::Kernel) {
    auto rows = nlohmann::json::array();
    for (const auto& [x, pmf] : spec.kernel.rows) {
      auto entries = nlohmann::json::array();
      for (const auto& [label, p] : pmf) entries.push_back({label, p});
      rows.push_back({{"x", x}, {"pmf", entries}});
    }
    j["rows"] = rows;
  }
  return j;
}

}  // namespace

SystemModel model_from_json(const nlohmann::json& j) {
  try {
    SystemModel model;
    const auto users = j.at("users").get<std::size_t>();
    model.channels = j.at("channels").get<std::size_t>();
    model.states = StateSpace(j.at("state_space").get<std::vector<int>>());
    model.estimator = estimator_from_json(j.at("estimator"));
    const auto marginals = j.at("marginals").get<std::vector<std::vector<std::vector<double>>>>();
    if (users == 0 || model.channels == 0) {
      fail(ErrorKind::Validation, "users and channels must be positive");
    }
    if (marginals.size() != users) {
      fail(ErrorKind::Validation, "marginals must have one entry per user");
    }
    for (std::size_t i = 0; i < users; ++i) {
      if (marginals[i].size() != model.channels) {
        fail(ErrorKind::Validation, "user " + std::to_string(i) + " marginals need one pmf per channel");
      }
      model.users.emplace_back(model.states, marginals[i], model.estimator);
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Validation, std::string("model: ") + e.what());
  }
}

nlohmann::json model_to_json(const SystemModel& model) {
  auto marginals = nlohmann::json::array();
  for (const auto& user : model.users) marginals.push_back(user.marginals());
  return {{"users", model.users.size()},
          {"channels", model.channels},
          {"state_space", model.states.values()},
          {"marginals", marginals},
          {"estimator", estimator_to_json(model.estimator)}};
}

}  // namespace fadesched
