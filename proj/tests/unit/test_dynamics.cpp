#include <doctest.h>

#include <cmath>
#include <random>

#include "../common/random_models.hpp"
#include "fadesched/dynamics.hpp"
#include "fadesched/errors.hpp"
#include "fadesched/experiment.hpp"

using namespace fadesched;

namespace {

RunConfig base_run(const SystemModel& model, PolicySpec policy, std::vector<ArrivalSpec> arrivals,
                   std::int64_t horizon) {
  RunConfig rc;
  rc.model = std::make_shared<const SystemModel>(model);
  rc.stats = std::make_shared<const std::vector<ConditionalStats>>(derive_all_stats(model));
  rc.policy = policy;
  rc.arrivals = std::move(arrivals);
  rc.horizon = horizon;
  return rc;
}

// One user whose single channel always sits at `value`.
SystemModel constant_channel(std::size_t users, int value) {
  return make_symmetric_model(users, 1, StateSpace({0, value}), {0.0, 1.0}, {EstimatorKind::Exact, {}});
}

const PolicySpec kMw{PolicyKind::Mw, Rounding::Floor, ""};
const PolicySpec kQmw{PolicyKind::Qmw, Rounding::Floor, ""};

}  // namespace

TEST_CASE("zero arrivals drain the queue and keep it empty") {
  const auto model = preset("example3a").model;
  for (auto policy : {kMw, PolicySpec{PolicyKind::NaiveMw, Rounding::Floor, ""}}) {
    auto rc = base_run(model, policy, {ArrivalSpec::zero()}, 2000);
    rc.initial_backlog = {50};
    SlotTrace trace(1, 2);
    const auto log = run(rc, &trace);
    bool drained = false;
    for (std::size_t t = 0; t < trace.size(); ++t) {
      if (drained) CHECK(trace.q_after(t)[0] == 0);
      drained = drained || trace.q_after(t)[0] == 0;
    }
    CHECK(drained);
    CHECK(log.final_backlog[0] == 0);
    CHECK(log.delivered_total[0] == 50);
  }
}

TEST_CASE("saturated two-channel example: conditional MW delivers 4, naive delivers 2") {
  const auto model = preset("example3a").model;
  auto rc = base_run(model, kMw, {ArrivalSpec::zero()}, 100'000);
  rc.initial_backlog = {1'000'000'000};
  const auto mw = run(rc);
  CHECK(std::abs(mw.per_user_throughput[0] - 4.0) < 0.1);
  rc.policy = {PolicyKind::NaiveMw, Rounding::Floor, ""};
  const auto naive = run(rc);
  CHECK(std::abs(naive.per_user_throughput[0] - 2.0) < 0.1);
}

TEST_CASE("slot records obey the success rule and service bound") {
  std::mt19937_64 gen(8);
  const auto model = testing_models::random_model(gen, 3, 3, 4, 8, false);
  const auto stats = derive_all_stats(model);
  for (auto policy : {kMw, PolicySpec{PolicyKind::Imw, Rounding::Floor, ""},
                      PolicySpec{PolicyKind::NaiveImw, Rounding::Ceil, ""}}) {
    Simulator sim(model, stats, Scheduler(policy, model.estimator.kind, 3),
                  std::vector<ArrivalSpec>(3, ArrivalSpec::binomial(10, 2.0)));
    auto state = SystemState::initial(3);
    Rng rng = make_stream(4, 0);
    const int peak = 3 * model.states.x_max();
    for (int t = 0; t < 2000; ++t) {
      const auto rec = step_slot(state, sim, rng);
      std::vector<std::int64_t> granted(3, 0);
      for (std::size_t j = 0; j < 3; ++j) {
        const auto& g = rec.allocation.channels[j];
        REQUIRE(g.user.has_value());
        CHECK(bool(rec.success[j]) == (g.rate <= rec.x[*g.user * 3 + j]));
        granted[*g.user] += g.rate;
      }
      for (std::size_t i = 0; i < 3; ++i) {
        CHECK(rec.delivered[i] <= granted[i]);
        CHECK(rec.delivered[i] == std::min(rec.served[i], rec.q_before[i]));
        CHECK(rec.q_after[i] - rec.q_before[i] >= rec.arrivals[i] - peak);
        CHECK(rec.q_after[i] == std::max<std::int64_t>(rec.q_before[i] - rec.served[i], 0) + rec.arrivals[i]);
      }
    }
  }
}

TEST_CASE("exact feedback with MW never wastes a transmission") {
  const auto model = make_symmetric_model(3, 2, StateSpace({0, 1, 3}), {0.3, 0.3, 0.4}, {EstimatorKind::Exact, {}});
  const auto stats = derive_all_stats(model);
  Simulator sim(model, stats, Scheduler(kMw, EstimatorKind::Exact, 2),
                std::vector<ArrivalSpec>(3, ArrivalSpec::bernoulli(0.6)));
  auto state = SystemState::initial(3);
  Rng rng = make_stream(5, 0);
  for (int t = 0; t < 5000; ++t) {
    const auto rec = sim.step_slot(state, rng);
    for (std::size_t j = 0; j < 2; ++j) {
      if (rec.allocation.channels[j].rate > 0) CHECK(rec.success[j]);
    }
  }
}

TEST_CASE("conservation holds exactly in both modes") {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 6; ++trial) {
    const auto model = testing_models::random_model(gen, 4, 2, 3, 4, false);
    auto rc = base_run(model, trial % 2 ? kMw : PolicySpec{PolicyKind::Imw, Rounding::Floor, ""},
                       std::vector<ArrivalSpec>(4, ArrivalSpec::binomial(10, 1.5)), 10'000);
    rc.initial_backlog = {3, 0, 7, 1};
    rc.seed = static_cast<std::uint64_t>(trial);
    const auto log = run(rc);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(log.arrivals_total[i] ==
            log.delivered_total[i] + log.final_backlog[i] - log.initial_backlog[i] + log.drops_total[i]);
    }

    QosSetup qos{5, {TrafficClass::RealTime, TrafficClass::RateGuaranteed, TrafficClass::BestEffort,
                     TrafficClass::BestEffort},
                 {0.05, 0, 0, 0}, {0, 2, 0, 0}};
    rc.qos = qos;
    rc.policy = kQmw;
    const auto fl = run(rc);
    for (std::size_t i : {0u, 2u, 3u}) {
      CHECK(fl.arrivals_total[i] ==
            fl.delivered_total[i] + fl.final_backlog[i] - fl.initial_backlog[i] + fl.drops_total[i]);
    }
  }
}

TEST_CASE("frame mode with only best-effort users is MW on frame-start queues") {
  const auto model = make_symmetric_model(3, 2, StateSpace({0, 1, 2}), {0.3, 0.3, 0.4}, {EstimatorKind::Sum, {}});
  const auto stats = derive_all_stats(model);
  QosSetup qos{4, std::vector<TrafficClass>(3, TrafficClass::BestEffort), {0, 0, 0}, {0, 0, 0}};
  Simulator sim(model, stats, Scheduler(kQmw, EstimatorKind::Sum, 2),
                std::vector<ArrivalSpec>(3, ArrivalSpec::binomial(10, 3.0)), qos);
  auto state = SystemState::initial(3);
  Rng rng = make_stream(6, 0);
  for (int k = 0; k < 200; ++k) {
    const auto q0 = state.q;
    const auto frame = sim.step_frame(state, rng);
    REQUIRE(frame.slots.size() == 4);
    for (std::size_t i = 0; i < 3; ++i) CHECK(frame.phi[i] == double(q0[i]));
    for (std::size_t t = 0; t < 4; ++t) {
      const auto& rec = frame.slots[t];
      CHECK(rec.allocation == mw_decide(frame.phi, rec.symbols, stats));
      for (std::size_t i = 0; i < 3; ++i) {
        const std::int64_t a = t == 0 ? frame.arrivals[i] : 0;
        CHECK(rec.arrivals[i] == a);
        CHECK(rec.q_after[i] == std::max<std::int64_t>(rec.q_before[i] - rec.served[i] + a, 0));
      }
    }
  }
}

TEST_CASE("rate-guaranteed virtual queue arithmetic") {
  const auto model = constant_channel(1, 5);
  const auto stats = derive_all_stats(model);
  QosSetup qos{1, {TrafficClass::RateGuaranteed}, {0}, {2}};
  Simulator sim(model, stats, Scheduler(kQmw, EstimatorKind::Exact, 1), {ArrivalSpec::zero()}, qos);
  auto state = SystemState::initial(1);
  Rng rng = make_stream(1, 0);
  auto frame = sim.step_frame(state, rng);
  CHECK(frame.frame_service[0] == 5);
  CHECK(state.z[0] == 0.0);
  state.z[0] = 10.0;
  frame = sim.step_frame(state, rng);
  CHECK(state.z[0] == 7.0);
}

TEST_CASE("real-time frame: drops and virtual queue") {
  const auto model = constant_channel(1, 1);
  const auto stats = derive_all_stats(model);
  QosSetup qos{7, {TrafficClass::RealTime}, {0.01}, {0}};
  Simulator sim(model, stats, Scheduler(kQmw, EstimatorKind::Exact, 1), {ArrivalSpec::deterministic(10)}, qos);
  auto state = SystemState::initial(1);
  Rng rng = make_stream(1, 0);
  const auto frame = sim.step_frame(state, rng);
  CHECK(frame.frame_service[0] == 7);
  CHECK(frame.drops[0] == 3);
  CHECK(state.y[0] == doctest::Approx(2.9).epsilon(1e-12));
  CHECK(state.rt_buffer[0] == 0);
}

TEST_CASE("real-time service never exceeds the frame's arrivals") {
  const auto model = constant_channel(1, 4);
  const auto stats = derive_all_stats(model);
  QosSetup qos{5, {TrafficClass::RealTime}, {0.1}, {0}};
  Simulator sim(model, stats, Scheduler(kQmw, EstimatorKind::Exact, 1), {ArrivalSpec::deterministic(6)}, qos);
  auto state = SystemState::initial(1);
  Rng rng = make_stream(1, 0);
  const auto frame = sim.step_frame(state, rng);
  CHECK(frame.frame_service[0] == 6);
  CHECK(frame.drops[0] == 0);
  CHECK(frame.slots[0].delivered[0] == 4);
  CHECK(frame.slots[1].delivered[0] == 2);
  CHECK(frame.slots[2].delivered[0] == 0);
}

TEST_CASE("horizon validation") {
  const auto model = preset("example3a").model;
  auto rc = base_run(model, kMw, {ArrivalSpec::bernoulli(0.5)}, 0);
  CHECK_THROWS_WITH_AS(run(rc), doctest::Contains("horizon"), Error);
  rc.horizon = 1;
  CHECK_NOTHROW(run(rc));
  rc.qos = QosSetup{10, {TrafficClass::BestEffort}, {0}, {0}};
  rc.policy = kQmw;
  rc.horizon = 9;
  try {
    run(rc);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::InvalidHorizon);
  }
}

TEST_CASE("same seed, same metrics") {
  const auto model = preset("example3a").model;
  auto rc = base_run(model, kMw, {ArrivalSpec::bernoulli(0.5)}, 20'000);
  rc.initial_backlog = {1'000'000'000};
  const auto a = run(rc);
  const auto b = run(rc);
  CHECK(a.per_user_throughput == b.per_user_throughput);
  CHECK(a.backlog_series == b.backlog_series);
  CHECK(a.mean_total_backlog == b.mean_total_backlog);
  rc.seed = 2;
  CHECK(run(rc).per_user_throughput != a.per_user_throughput);
}

TEST_CASE("little delay") {
  MetricsLog log;
  log.mean_total_backlog = 30.0;
  log.aggregate_arrival_rate = 3.0;
  CHECK(little_delay(log) == doctest::Approx(10.0));
  log.aggregate_arrival_rate = 0.0;
  try {
    little_delay(log);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::ZeroArrivals);
  }
}

TEST_CASE("deterministic arrivals and service give a delay of one slot") {
  const auto model = constant_channel(1, 1);
  const auto rc = base_run(model, kMw, {ArrivalSpec::deterministic(1)}, 10'000);
  const auto log = run(rc);
  CHECK(little_delay(log) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(log.divergent);
}

TEST_CASE("divergence diagnostic") {
  DivergenceRule rule;
  CHECK(rule(10.0, 20.0));
  CHECK_FALSE(rule(10.0, 15.5));
  CHECK_FALSE(rule(0.0, 0.9));
  // a queue fed faster than it can be served grows linearly
  const auto model = constant_channel(1, 1);
  auto rc = base_run(model, kMw, {ArrivalSpec::deterministic(2)}, 10'000);
  CHECK(run(rc).divergent);
}

TEST_CASE("initial state and qos validation") {
  CHECK_THROWS_AS(SystemState::initial(2, std::vector<std::int64_t>{1}), Error);
  CHECK_THROWS_AS(SystemState::initial(1, std::vector<std::int64_t>{-1}), Error);
  QosSetup bad{0, {TrafficClass::BestEffort}, {0}, {0}};
  CHECK_THROWS_AS(bad.validate(1), Error);
  QosSetup alpha{2, {TrafficClass::RealTime}, {1.5}, {0}};
  CHECK_THROWS_AS(alpha.validate(1), Error);
  CHECK(traffic_class_from_string("rg") == TrafficClass::RateGuaranteed);
  CHECK_THROWS_AS(traffic_class_from_string("bulk"), Error);
}

TEST_CASE("arrival samplers match their means") {
  Rng rng = make_stream(3, 1);
  for (const auto& spec : {ArrivalSpec::bernoulli(0.3), ArrivalSpec::binomial(10, 2.75), ArrivalSpec::deterministic(4)}) {
    ArrivalSampler sample(spec);
    double sum = 0.0, sq = 0.0;
    const int n = 200'000;
    for (int k = 0; k < n; ++k) {
      const double a = static_cast<double>(sample(rng));
      sum += a;
      sq += a * a;
    }
    CHECK(std::abs(sum / n - spec.mean) < 0.02);
    CHECK(std::abs(sq / n - spec.second_moment()) < 0.1);
  }
  CHECK(ArrivalSpec::binomial(10, 2.75).second_moment() == doctest::Approx(10 * 0.275 * 0.725 + 2.75 * 2.75));
  CHECK_THROWS_AS(ArrivalSpec::binomial(10, 11).validate(), Error);
  CHECK_THROWS_AS(ArrivalSpec::bernoulli(1.5).validate(), Error);
  CHECK(ArrivalSpec::zero().with_mean(0.2).kind == ArrivalKind::Bernoulli);
  CHECK(ArrivalSpec::from_json(ArrivalSpec::binomial(10, 0.3).to_json()) == ArrivalSpec::binomial(10, 0.3));
}
