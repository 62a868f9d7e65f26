#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "fadesched/channel_model.hpp"

namespace testing_models {

inline std::vector<double> random_pmf(std::mt19937_64& rng, std::size_t k, bool allow_zero = true) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::bernoulli_distribution zero(allow_zero ? 0.2 : 0.0);
  std::vector<double> p(k);
  double total = 0.0;
  for (auto& v : p) {
    v = zero(rng) ? 0.0 : u(rng);
    total += v;
  }
  if (total == 0.0) {
    p[k - 1] = 1.0;
    total = 1.0;
  }
  for (auto& v : p) v /= total;
  // renormalize the last entry so the sum is 1 to rounding
  double rest = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) rest += p[i];
  p[k - 1] = std::max(0.0, 1.0 - rest);
  return p;
}

inline fadesched::StateSpace random_states(std::mt19937_64& rng, std::size_t size, int max_value) {
  std::vector<int> values{0};
  std::uniform_int_distribution<int> step(1, std::max(1, max_value / static_cast<int>(size)));
  while (values.size() < size) values.push_back(values.back() + step(rng));
  return fadesched::StateSpace(values);
}

inline fadesched::EstimatorSpec random_kernel(std::mt19937_64& rng, const fadesched::StateSpace& states,
                                              std::size_t channels, int labels) {
  fadesched::EstimatorSpec spec{fadesched::EstimatorKind::Kernel, {}};
  std::vector<std::size_t> idx(channels, 0);
  for (;;) {
    std::vector<int> x(channels);
    for (std::size_t j = 0; j < channels; ++j) x[j] = states[idx[j]];
    const auto pmf = random_pmf(rng, static_cast<std::size_t>(labels));
    std::vector<std::pair<int, double>> row;
    for (int l = 0; l < labels; ++l) row.push_back({l, pmf[static_cast<std::size_t>(l)]});
    spec.kernel.rows[x] = row;
    std::size_t j = 0;
    while (j < channels && ++idx[j] == states.size()) idx[j++] = 0;
    if (j == channels) break;
  }
  return spec;
}

inline fadesched::EstimatorSpec random_estimator(std::mt19937_64& rng, const fadesched::StateSpace& states,
                                                 std::size_t channels, bool allow_kernel = true) {
  std::uniform_int_distribution<int> pick(0, allow_kernel ? 4 : 3);
  switch (pick(rng)) {
    case 0: return {fadesched::EstimatorKind::Exact, {}};
    case 1: return {fadesched::EstimatorKind::Sum, {}};
    case 2: return {fadesched::EstimatorKind::AvgFloor, {}};
    case 3: return {fadesched::EstimatorKind::AvgCeil, {}};
    default: return random_kernel(rng, states, channels, 3);
  }
}

// Every user shares the state space, channel count and estimator kind; the
// marginals (and kernel tables) differ per user.
inline fadesched::SystemModel random_model(std::mt19937_64& rng, std::size_t users, std::size_t channels,
                                           std::size_t state_count, int max_value, bool allow_kernel = true) {
  fadesched::SystemModel model;
  model.states = random_states(rng, state_count, max_value);
  model.channels = channels;
  model.estimator = random_estimator(rng, model.states, channels, allow_kernel);
  for (std::size_t i = 0; i < users; ++i) {
    std::vector<std::vector<double>> marginals;
    for (std::size_t j = 0; j < channels; ++j) marginals.push_back(random_pmf(rng, state_count));
    fadesched::EstimatorSpec est = model.estimator;
    if (est.kind == fadesched::EstimatorKind::Kernel) est = random_kernel(rng, model.states, channels, 3);
    model.users.emplace_back(model.states, marginals, est);
  }
  if (model.estimator.kind == fadesched::EstimatorKind::Kernel) model.estimator = model.users[0].estimator();
  return model;
}

}  // namespace testing_models
