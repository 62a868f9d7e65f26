#include <doctest.h>

#include <random>

#include "../common/random_models.hpp"
#include "fadesched/errors.hpp"
#include "fadesched/experiment.hpp"
#include "fadesched/policy.hpp"

using namespace fadesched;

namespace {

std::vector<ConditionalStats> on_off_stats(std::size_t users, std::size_t channels, EstimatorKind kind) {
  return derive_all_stats(make_symmetric_model(users, channels, StateSpace({0, 1}), {0.5, 0.5}, {kind, {}}));
}

std::vector<std::size_t> symbols_of(const std::vector<ConditionalStats>& stats,
                                    const std::vector<EstimateSymbol>& keys) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < keys.size(); ++i) out.push_back(stats[i].index_of(keys[i]));
  return out;
}

// Random decision instance: symbols drawn from each user's table, integer weights.
struct Instance {
  std::vector<double> weights;
  std::vector<std::size_t> symbols;
};

Instance random_instance(std::mt19937_64& rng, const std::vector<ConditionalStats>& stats) {
  Instance in;
  std::uniform_int_distribution<int> q(0, 20);
  for (const auto& st : stats) {
    in.weights.push_back(q(rng));
    in.symbols.push_back(std::uniform_int_distribution<std::size_t>(0, st.symbol_count() - 1)(rng));
  }
  return in;
}

}  // namespace

TEST_CASE("mw: two-channel example with s = 3 uses only the second channel") {
  const auto stats = derive_all_stats(preset("example3a").model);
  const std::vector<std::size_t> s{stats[0].index_of({3})};
  for (double w : {0.5, 1.0, 100.0}) {
    const std::vector<double> weights{w};
    const auto a = mw_decide(weights, s, stats);
    CHECK(a.channels[0].rate == 0);
    CHECK(a.channels[1].rate == 6);
  }
}

TEST_CASE("mw: all-zero weights give every channel to the first user at r*") {
  const auto stats = on_off_stats(3, 4, EstimatorKind::Sum);
  const auto s = symbols_of(stats, {{1}, {4}, {2}});
  const std::vector<double> zero(3, 0.0);
  const auto a = mw_decide(zero, s, stats);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(a.channels[j].user == 0u);
    CHECK(a.channels[j].rate == stats[0].r_star(j, s[0]).rate);
  }
  CHECK(imw_decide(zero, s, stats) == a);
}

TEST_CASE("mw: product comparison with sum feedback") {
  const auto stats = on_off_stats(2, 6, EstimatorKind::Sum);
  const auto s = symbols_of(stats, {{3}, {6}});
  CHECK(stats[0].ccdf(0, s[0], 1) == doctest::Approx(0.5));
  CHECK(stats[1].ccdf(0, s[1], 1) == doctest::Approx(1.0));
  const std::vector<double> w{5.0, 1.0};
  const auto a = mw_decide(w, s, stats);
  for (const auto& g : a.channels) {
    CHECK(g.user == 0u);
    CHECK(g.rate == 1);
  }
}

TEST_CASE("imw: two rounds with equal queues") {
  const auto stats = on_off_stats(2, 2, EstimatorKind::Exact);
  const auto s = symbols_of(stats, {{1, 1}, {1, 1}});
  const std::vector<double> q{1.0, 1.0};
  const auto a = imw_decide(q, s, stats);
  CHECK(a.channels[0].user == 0u);
  CHECK(a.channels[0].rate == 1);
  CHECK(a.channels[1].user == 1u);
  CHECK(a.channels[1].rate == 1);
  // plain MW gives both channels to the first user
  CHECK(mw_decide(q, s, stats).channels[1].user == 0u);
}

TEST_CASE("imw equals mw with a single channel") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto model = testing_models::random_model(rng, 3, 1, 3, 6, false);
    const auto stats = derive_all_stats(model);
    const auto in = random_instance(rng, stats);
    CHECK(imw_decide(in.weights, in.symbols, stats) == mw_decide(in.weights, in.symbols, stats));
  }
}

TEST_CASE("imw virtual weights never increase and each round is a fresh argmax") {
  std::mt19937_64 rng(4);
  int instances = 0;
  while (instances < 10'000) {
    const auto model = testing_models::random_model(rng, 4, 4, 3, 5, false);
    const auto stats = derive_all_stats(model);
    for (int k = 0; k < 100; ++k, ++instances) {
      const auto in = random_instance(rng, stats);
      const auto a = imw_decide(in.weights, in.symbols, stats);
      std::vector<double> v = in.weights;
      for (std::size_t j = 0; j < a.channels.size(); ++j) {
        double best = -1.0;
        std::size_t arg = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
          const auto& rc = stats[i].r_star(j, in.symbols[i]);
          const double score = v[i] * rc.success_prob * rc.rate;
          if (score > best * (1 + 1e-12) + 1e-300 || best < 0) {
            best = score;
            arg = i;
          }
        }
        REQUIRE(a.channels[j].user == arg);
        const std::vector<double> before = v;
        v[arg] = std::max(0.0, v[arg] - a.channels[j].rate);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] <= before[i]);
      }
    }
  }
}

TEST_CASE("scale invariance of mw, qmw, naive_mw and stat") {
  std::mt19937_64 rng(5);
  const auto model = testing_models::random_model(rng, 4, 3, 4, 7, false);
  const auto stats = derive_all_stats(model);
  const auto gamma = StatWeights::mixture(4, {{0.3, {1, 2, 0, 1}}, {0.6, {0, 0, 1, 3}}});
  for (int trial = 0; trial < 10'000; ++trial) {
    const auto in = random_instance(rng, stats);
    std::vector<double> scaled = in.weights;
    for (double& w : scaled) w *= 7.0;
    CHECK(mw_decide(scaled, in.symbols, stats) == mw_decide(in.weights, in.symbols, stats));
    CHECK(qmw_decide(scaled, in.symbols, stats) == qmw_decide(in.weights, in.symbols, stats));
    std::vector<std::vector<int>> believed;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      believed.push_back(naive_channel_estimates(model.estimator.kind, 3, stats[i].symbol(in.symbols[i]),
                                                 Rounding::Ceil));
    }
    CHECK(naive_mw_decide(scaled, believed) == naive_mw_decide(in.weights, believed));
    Rng a = make_stream(trial, 0), b = make_stream(trial, 0);
    CHECK(stat_decide(gamma, in.symbols, stats, a) == stat_decide(gamma, in.symbols, stats, b));
  }
}

TEST_CASE("imw decrements in packets, so scaling the weights can change its allocation") {
  const auto stats = on_off_stats(2, 2, EstimatorKind::Exact);
  const auto s = symbols_of(stats, {{1, 1}, {1, 1}});
  const std::vector<double> w{2.0, 1.5};
  const std::vector<double> w7{14.0, 10.5};
  CHECK(imw_decide(w, s, stats).channels[1].user == 1u);
  CHECK(imw_decide(w7, s, stats).channels[1].user == 0u);
}

TEST_CASE("mw with exact ON/OFF feedback serves the longest connected queue") {
  std::mt19937_64 rng(6);
  const auto stats = on_off_stats(5, 3, EstimatorKind::Exact);
  for (int trial = 0; trial < 2000; ++trial) {
    const auto in = random_instance(rng, stats);
    const auto a = mw_decide(in.weights, in.symbols, stats);
    for (std::size_t j = 0; j < 3; ++j) {
      double longest = 0.0;
      std::optional<std::size_t> who;
      for (std::size_t i = 0; i < 5; ++i) {
        if (stats[i].symbol(in.symbols[i])[j] == 1 && in.weights[i] > longest) {
          longest = in.weights[i];
          who = i;
        }
      }
      if (who) {
        CHECK(a.channels[j].user == who);
        CHECK(a.channels[j].rate == 1);
      }
    }
  }
}

TEST_CASE("stat: point mass and the two-channel example") {
  const auto stats = derive_all_stats(preset("example3a").model);
  const auto gamma = StatWeights::table({4}, {1.0, 1.0, 1.0, 1.0});
  Rng rng = make_stream(1, 0);
  const std::vector<std::size_t> s{stats[0].index_of({4})};
  const auto a = stat_decide(gamma, s, stats, rng);
  CHECK(a.channels[0].rate == 2);
  CHECK(a.channels[1].rate == 6);

  const auto two = on_off_stats(2, 2, EstimatorKind::Sum);
  const auto point = StatWeights::mixture(2, {{1.0, {0.0, 1.0}}});
  const auto s2 = symbols_of(two, {{2}, {1}});
  const auto b = stat_decide(point, s2, two, rng);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(b.channels[j].user == 1u);
    CHECK(b.channels[j].rate == two[1].r_star(j, s2[1]).rate);
  }
}

TEST_CASE("stat: even split selects each user about half the time") {
  const auto stats = on_off_stats(2, 1, EstimatorKind::Exact);
  const auto gamma = StatWeights::table({2, 2}, std::vector<double>(8, 0.5));
  Rng rng = make_stream(9, 0);
  const std::vector<std::size_t> s{stats[0].index_of({1}), stats[1].index_of({0})};
  int first = 0;
  const int n = 100'000;
  for (int t = 0; t < n; ++t) first += stat_decide(gamma, s, stats, rng).channels[0].user == 0u;
  CHECK(std::abs(first / double(n) - 0.5) < 0.01);
}

TEST_CASE("stat: leftover probability idles every channel") {
  const auto stats = on_off_stats(1, 2, EstimatorKind::Sum);
  const auto none = StatWeights::zero(1);
  Rng rng = make_stream(2, 0);
  const std::vector<std::size_t> s{0};
  for (const auto& g : stat_decide(none, s, stats, rng).channels) CHECK_FALSE(g.user.has_value());
}

TEST_CASE("stat weights validation and JSON") {
  CHECK_THROWS_AS(StatWeights::table({2}, {0.5, 1.2}), Error);
  CHECK_THROWS_AS(StatWeights::table({2}, {-0.1, 0.5}), Error);
  CHECK_THROWS_AS(StatWeights::mixture(2, {{0.7, {1, 0}}, {0.4, {0, 1}}}), Error);
  const auto t = StatWeights::table({2, 2}, {0, 0, 1, 0, 0, 1, 0.5, 0.5});
  const auto back = StatWeights::from_json(t.to_json());
  const auto stats = on_off_stats(2, 1, EstimatorKind::Exact);
  for (std::size_t a = 0; a < 2; ++a) {
    for (std::size_t b = 0; b < 2; ++b) {
      const std::vector<std::size_t> s{a, b};
      CHECK(back.distribution(s, stats) == t.distribution(s, stats));
    }
  }
}

TEST_CASE("naive: trusting the averaged feedback on the two-channel example") {
  const auto model = preset("example3a").model;
  const auto stats = derive_all_stats(model);
  Scheduler naive({PolicyKind::NaiveMw, Rounding::Floor, ""}, EstimatorKind::AvgFloor, 2);
  Rng rng = make_stream(1, 0);
  const std::vector<double> w{1.0};
  const std::vector<EstimateSymbol> keys{{1}};
  const std::vector<std::size_t> s{stats[0].index_of({1})};
  const auto a = naive.decide(w, s, keys, stats, rng);
  CHECK(a.channels[0].rate == 1);
  CHECK(a.channels[1].rate == 1);
  // true state (2, 0): only the first channel delivers
  CHECK(int(a.channels[0].rate <= 2) + int(a.channels[1].rate <= 0) == 1);
}

TEST_CASE("naive: rounding of sum feedback") {
  CHECK(naive_channel_estimates(EstimatorKind::Sum, 6, {5}, Rounding::Floor) == std::vector<int>(6, 0));
  CHECK(naive_channel_estimates(EstimatorKind::Sum, 6, {5}, Rounding::Ceil) == std::vector<int>(6, 1));
  CHECK(naive_channel_estimates(EstimatorKind::Sum, 6, {6}, Rounding::Floor) == std::vector<int>(6, 1));
  CHECK(naive_channel_estimates(EstimatorKind::AvgCeil, 2, {4}, Rounding::Floor) == std::vector<int>{4, 4});
  CHECK(naive_channel_estimates(EstimatorKind::Exact, 2, {0, 3}, Rounding::Floor) == std::vector<int>{0, 3});
  CHECK_THROWS_AS(naive_channel_estimates(EstimatorKind::Kernel, 2, {1}, Rounding::Floor), Error);
  const std::vector<std::vector<int>> zeros{{0, 0}, {0, 0}};
  const std::vector<double> w{3.0, 1.0};
  for (const auto& g : naive_mw_decide(w, zeros).channels) CHECK(g.rate == 0);
  for (const auto& g : naive_imw_decide(w, zeros).channels) CHECK(g.rate == 0);
}

TEST_CASE("naive imw: the decrement moves the second channel") {
  const std::vector<std::vector<int>> believed{{1, 1}, {1, 1}};
  const std::vector<double> w{3.0, 2.5};
  const auto a = naive_imw_decide(w, believed);
  CHECK(a.channels[0].user == 0u);
  CHECK(a.channels[1].user == 1u);
  CHECK(naive_mw_decide(w, believed).channels[1].user == 0u);
  const std::vector<std::vector<int>> single{{2}, {3}};
  CHECK(naive_imw_decide(w, single) == naive_mw_decide(w, single));
}

TEST_CASE("qmw follows the frame weights") {
  const auto stats = on_off_stats(3, 4, EstimatorKind::Sum);
  const auto s = symbols_of(stats, {{2}, {2}, {2}});
  const std::vector<double> phi{10.0, 1.0, 0.0};
  for (const auto& g : qmw_decide(phi, s, stats).channels) CHECK(g.user == 0u);
  const std::vector<double> only{0.0, 0.0, 4.0};
  for (const auto& g : qmw_decide(only, s, stats).channels) CHECK(g.user == 2u);
}

TEST_CASE("policy specs") {
  const auto p = PolicySpec::from_json(nlohmann::json{{"name", "naive_imw"}, {"rounding", "ceil"}});
  CHECK(p.kind == PolicyKind::NaiveImw);
  CHECK(p.label() == "naive_imw_ceil");
  CHECK(PolicySpec::from_json(p.to_json()) == p);
  CHECK(PolicySpec::from_json(nlohmann::json("qmw")).kind == PolicyKind::Qmw);
  CHECK_THROWS_AS(PolicySpec::from_json(nlohmann::json("fifo")), Error);
  CHECK_THROWS_AS(Scheduler({PolicyKind::Stat, Rounding::Floor, ""}, EstimatorKind::Sum, 2), Error);
}

TEST_CASE("decisions reject unknown estimates and negative weights") {
  const auto stats = on_off_stats(2, 2, EstimatorKind::Sum);
  const std::vector<std::size_t> bad{0, 99};
  const std::vector<double> w{1.0, 1.0};
  CHECK_THROWS_AS(mw_decide(w, bad, stats), Error);
  const std::vector<std::size_t> ok{0, 0};
  const std::vector<double> neg{1.0, -1.0};
  CHECK_THROWS_AS(mw_decide(neg, ok, stats), Error);
}
