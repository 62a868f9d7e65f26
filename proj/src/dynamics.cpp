#include "fadesched/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fadesched/errors.hpp"

namespace fadesched {

namespace {

constexpr std::size_t kNoSymbol = std::numeric_limits<std::size_t>::max();
constexpr std::uint64_t kSymbolCacheCap = 1u << 20;
constexpr std::size_t kSeriesBins = 100;

bool policy_needs_stats(PolicyKind kind) {
  return kind != PolicyKind::NaiveMw && kind != PolicyKind::NaiveImw;
}

}  // namespace

const char* to_string(TrafficClass c) {
  switch (c) {
    case TrafficClass::RealTime: return "rt";
    case TrafficClass::RateGuaranteed: return "rg";
    case TrafficClass::BestEffort: return "be";
  }
  return "be";
}

TrafficClass traffic_class_from_string(const std::string& name) {
  if (name == "rt") return TrafficClass::RealTime;
  if (name == "rg") return TrafficClass::RateGuaranteed;
  if (name == "be") return TrafficClass::BestEffort;
  fail(ErrorKind::Validation, "unknown traffic class '" + name + "'");
}

void QosSetup::validate(std::size_t users) const {
  if (frame_length < 1) fail(ErrorKind::Validation, "frame length must be >= 1");
  if (classes.size() != users || alpha.size() != users || beta.size() != users) {
    fail(ErrorKind::Validation, "qos classes, alpha and beta need one entry per user");
  }
  for (std::size_t i = 0; i < users; ++i) {
    if (classes[i] == TrafficClass::RealTime && !(alpha[i] >= 0.0 && alpha[i] <= 1.0)) {
      fail(ErrorKind::Validation, "drop ratio bound must lie in [0, 1]");
    }
    if (classes[i] == TrafficClass::RateGuaranteed && !(beta[i] >= 0.0)) {
      fail(ErrorKind::Validation, "minimum rate must be >= 0");
    }
  }
}

SystemState SystemState::initial(std::size_t users, std::span<const std::int64_t> backlog) {
  SystemState s;
  s.q.assign(users, 0);
  if (!backlog.empty()) {
    if (backlog.size() != users) fail(ErrorKind::Validation, "initial backlog needs one entry per user");
    for (std::size_t i = 0; i < users; ++i) {
      if (backlog[i] < 0) fail(ErrorKind::Validation, "initial backlog must be >= 0");
      s.q[i] = backlog[i];
    }
  }
  s.y.assign(users, 0.0);
  s.z.assign(users, 0.0);
  s.rt_buffer.assign(users, 0);
  return s;
}

void SlotTrace::append(const SlotRecord& r) {
  q_before_.insert(q_before_.end(), r.q_before.begin(), r.q_before.end());
  q_after_.insert(q_after_.end(), r.q_after.begin(), r.q_after.end());
  symbols_.insert(symbols_.end(), r.symbols.begin(), r.symbols.end());
  for (const auto& g : r.allocation.channels) {
    grant_user_.push_back(g.user ? static_cast<int>(*g.user) : -1);
    grant_rate_.push_back(g.rate);
  }
  ++slots_;
}

Simulator::Simulator(const SystemModel& model, std::span<const ConditionalStats> stats,
                     Scheduler scheduler, std::vector<ArrivalSpec> arrivals,
                     std::optional<QosSetup> qos)
    : model_(model),
      stats_(stats),
      scheduler_(std::move(scheduler)),
      arrivals_(std::move(arrivals)),
      qos_(std::move(qos)),
      needs_stats_(policy_needs_stats(scheduler_.spec().kind)) {
  const std::size_t n = model_.user_count();
  if (n == 0) fail(ErrorKind::Validation, "model has no users");
  if (stats_.size() != n) fail(ErrorKind::Validation, "one stats table per user is required");
  if (arrivals_.size() != n) fail(ErrorKind::Validation, "one arrival spec per user is required");
  for (const auto& a : arrivals_) samplers_.emplace_back(a);
  if (qos_) qos_->validate(n);

  symbol_cache_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& user = model_.users[i];
    const std::uint64_t joint = user.joint_outcomes();
    if (!user.estimator().deterministic() || joint > kSymbolCacheCap) continue;
    auto& cache = symbol_cache_[i];
    cache.assign(joint, -1);
    std::vector<int> x(user.channels());
    for (std::uint64_t idx = 0; idx < joint; ++idx) {
      std::uint64_t rest = idx;
      for (std::size_t j = 0; j < x.size(); ++j) {
        x[j] = user.states()[rest % user.states().size()];
        rest /= user.states().size();
      }
      if (auto s = stats_[i].find(user.estimate(x))) cache[idx] = static_cast<std::int32_t>(*s);
    }
  }
}

Simulator::Observation Simulator::observe(Rng& rng) const {
  const std::size_t n = model_.user_count();
  const std::size_t m = model_.channels;
  Observation obs;
  obs.x.resize(n * m);
  obs.symbols.assign(n, kNoSymbol);
  obs.keys.resize(n);
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& user = model_.users[i];
    user.sample_states(rng, idx);
    std::uint64_t joint = 0;
    for (std::size_t j = m; j-- > 0;) joint = joint * user.states().size() + idx[j];
    for (std::size_t j = 0; j < m; ++j) obs.x[i * m + j] = user.states()[idx[j]];
    const std::span<const int> xs(&obs.x[i * m], m);
    if (!symbol_cache_[i].empty()) {
      const std::int32_t s = symbol_cache_[i][joint];
      if (s >= 0) {
        obs.symbols[i] = static_cast<std::size_t>(s);
        obs.keys[i] = stats_[i].symbol(obs.symbols[i]);
        continue;
      }
      obs.keys[i] = user.estimate(xs);
    } else if (user.estimator().deterministic()) {
      obs.keys[i] = user.estimate(xs);
    } else {
      const auto pmf = user.estimate_pmf(xs);
      double u = uniform01(rng);
      obs.keys[i] = pmf.back().first;
      for (const auto& [sym, p] : pmf) {
        if (u < p) {
          obs.keys[i] = sym;
          break;
        }
        u -= p;
      }
    }
    if (auto s = stats_[i].find(obs.keys[i])) {
      obs.symbols[i] = *s;
    } else if (needs_stats_) {
      stats_[i].index_of(obs.keys[i]);  // throws UnknownEstimate
    }
  }
  return obs;
}

std::vector<std::int64_t> Simulator::serve(const Observation& obs, const Allocation& alloc,
                                           std::vector<char>& success) const {
  const std::size_t m = model_.channels;
  std::vector<std::int64_t> served(model_.user_count(), 0);
  success.assign(m, 0);
  for (std::size_t j = 0; j < m; ++j) {
    const auto& grant = alloc.channels[j];
    if (!grant.user) continue;
    const std::size_t i = *grant.user;
    if (grant.rate <= obs.x[i * m + j]) {
      success[j] = 1;
      served[i] += grant.rate;
    }
  }
  return served;
}

SlotRecord Simulator::step_slot(SystemState& state, Rng& rng) const {
  const std::size_t n = model_.user_count();
  SlotRecord rec;
  rec.t = state.slot;
  rec.q_before = state.q;
  Observation obs = observe(rng);
  std::vector<double> weights(state.q.begin(), state.q.end());
  rec.allocation = scheduler_.decide(weights, obs.symbols, obs.keys, stats_, rng);
  rec.served = serve(obs, rec.allocation, rec.success);
  rec.arrivals.resize(n);
  rec.delivered.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    rec.arrivals[i] = samplers_[i](rng);
    rec.delivered[i] = std::min(rec.served[i], state.q[i]);
    state.q[i] = std::max<std::int64_t>(state.q[i] - rec.served[i], 0) + rec.arrivals[i];
  }
  rec.q_after = state.q;
  rec.x = std::move(obs.x);
  rec.symbols = std::move(obs.symbols);
  ++state.slot;
  return rec;
}

FrameRecord Simulator::step_frame(SystemState& state, Rng& rng) const {
  if (!qos_) fail(ErrorKind::Validation, "step_frame needs a QoS setup");
  const std::size_t n = model_.user_count();
  const auto& classes = qos_->classes;
  FrameRecord frame;
  frame.k = state.frame;
  frame.arrivals.resize(n);
  frame.phi.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    frame.arrivals[i] = samplers_[i](rng);
    switch (classes[i]) {
      case TrafficClass::RealTime:
        state.rt_buffer[i] = frame.arrivals[i];
        frame.phi[i] = state.y[i];
        break;
      case TrafficClass::RateGuaranteed:
        frame.phi[i] = state.z[i];
        break;
      case TrafficClass::BestEffort:
        frame.phi[i] = static_cast<double>(state.q[i]);
        break;
    }
  }
  frame.frame_service.assign(n, 0);
  for (std::size_t slot = 0; slot < qos_->frame_length; ++slot) {
    SlotRecord rec;
    rec.t = state.slot;
    rec.q_before = state.q;
    Observation obs = observe(rng);
    rec.allocation = scheduler_.decide(frame.phi, obs.symbols, obs.keys, stats_, rng);
    rec.served = serve(obs, rec.allocation, rec.success);
    rec.arrivals.assign(n, 0);
    rec.delivered.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::int64_t mu = rec.served[i];
      switch (classes[i]) {
        case TrafficClass::RealTime:
          rec.delivered[i] = std::min(mu, state.rt_buffer[i]);
          state.rt_buffer[i] -= rec.delivered[i];
          break;
        case TrafficClass::RateGuaranteed:
          rec.delivered[i] = mu;
          break;
        case TrafficClass::BestEffort: {
          const std::int64_t a = slot == 0 ? frame.arrivals[i] : 0;
          rec.arrivals[i] = a;
          rec.delivered[i] = std::min(mu, state.q[i] + a);
          state.q[i] = std::max<std::int64_t>(state.q[i] - mu + a, 0);
          break;
        }
      }
      frame.frame_service[i] += rec.delivered[i];
    }
    rec.q_after = state.q;
    rec.x = std::move(obs.x);
    rec.symbols = std::move(obs.symbols);
    ++state.slot;
    frame.slots.push_back(std::move(rec));
  }
  frame.drops.assign(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const double served = static_cast<double>(frame.frame_service[i]);
    if (classes[i] == TrafficClass::RealTime) {
      frame.drops[i] = state.rt_buffer[i];
      state.rt_buffer[i] = 0;
      state.y[i] = std::max(0.0, state.y[i] - served + frame.arrivals[i] * (1.0 - qos_->alpha[i]));
    } else if (classes[i] == TrafficClass::RateGuaranteed) {
      state.z[i] = std::max(0.0, state.z[i] - served + qos_->beta[i]);
    }
  }
  frame.y_after = state.y;
  frame.z_after = state.z;
  ++state.frame;
  return frame;
}

SlotRecord step_slot(SystemState& state, const Simulator& sim, Rng& rng) {
  return sim.step_slot(state, rng);
}

FrameRecord step_frame(SystemState& state, const Simulator& sim, Rng& rng) {
  return sim.step_frame(state, rng);
}

namespace {

// Time averages over the measured window.
class MetricsAccumulator {
 public:
  MetricsAccumulator(std::size_t users, std::int64_t measured_slots)
      : users_(users), measured_(measured_slots) {
    backlog_sum_.assign(users, 0.0);
    delivered_.assign(users, 0);
    arrivals_.assign(users, 0);
    bins_ = static_cast<std::size_t>(std::min<std::int64_t>(kSeriesBins, measured_slots));
    series_sum_.assign(bins_, 0.0);
    series_count_.assign(bins_, 0);
  }

  // Backlog per user at the start of a measured slot, and what the
  // diagnostic and Little's-law totals see.
  void slot(std::span<const double> backlog, double diagnostic, double total, double drift) {
    for (std::size_t i = 0; i < users_; ++i) backlog_sum_[i] += backlog[i];
    total_sum_ += total;
    drift_sum_ += drift;
    const auto quartile = static_cast<std::size_t>(std::min<std::int64_t>(3, index_ * 4 / measured_));
    quartile_sum_[quartile] += diagnostic;
    quartile_count_[quartile] += 1;
    const auto bin = static_cast<std::size_t>(index_ * static_cast<std::int64_t>(bins_) / measured_);
    series_sum_[bin] += total;
    series_count_[bin] += 1;
    ++index_;
  }

  void flow(std::size_t user, std::int64_t arrivals, std::int64_t delivered) {
    arrivals_[user] += arrivals;
    delivered_[user] += delivered;
  }

  void finish(MetricsLog& log, const std::vector<bool>& real_queue, const DivergenceRule& rule) const {
    const double slots = static_cast<double>(measured_);
    log.measured_slots = measured_;
    log.mean_total_backlog = total_sum_ / slots;
    log.mean_drift = drift_sum_ / slots;
    log.per_user_backlog.resize(users_);
    log.per_user_throughput.resize(users_);
    log.per_user_arrival_rate.resize(users_);
    log.aggregate_arrival_rate = 0.0;
    for (std::size_t i = 0; i < users_; ++i) {
      log.per_user_backlog[i] = backlog_sum_[i] / slots;
      log.per_user_throughput[i] = static_cast<double>(delivered_[i]) / slots;
      log.per_user_arrival_rate[i] = static_cast<double>(arrivals_[i]) / slots;
      if (real_queue[i]) log.aggregate_arrival_rate += log.per_user_arrival_rate[i];
    }
    for (std::size_t q = 0; q < 4; ++q) {
      log.quartile_backlog[q] = quartile_count_[q] ? quartile_sum_[q] / quartile_count_[q] : 0.0;
    }
    log.divergent = rule(log.quartile_backlog[1], log.quartile_backlog[3]);
    log.backlog_series.resize(bins_);
    for (std::size_t b = 0; b < bins_; ++b) {
      log.backlog_series[b] = series_count_[b] ? series_sum_[b] / series_count_[b] : 0.0;
    }
  }

 private:
  std::size_t users_;
  std::int64_t measured_;
  std::int64_t index_ = 0;
  std::vector<double> backlog_sum_;
  std::vector<std::int64_t> delivered_;
  std::vector<std::int64_t> arrivals_;
  double total_sum_ = 0.0;
  double drift_sum_ = 0.0;
  std::array<double, 4> quartile_sum_{};
  std::array<double, 4> quartile_count_{};
  std::size_t bins_;
  std::vector<double> series_sum_;
  std::vector<std::int64_t> series_count_;
};

double batch_standard_error(const std::vector<double>& values) {
  if (values.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / (n - 1.0) / n);
}

double lyapunov(std::span<const std::int64_t> q) {
  double total = 0.0;
  for (auto v : q) total += static_cast<double>(v) * static_cast<double>(v);
  return total;
}

}  // namespace

MetricsLog run(const RunConfig& config, SlotTrace* trace) {
  if (!config.model || !config.stats) fail(ErrorKind::Validation, "run needs a model and its stats");
  const SystemModel& model = *config.model;
  const std::size_t n = model.user_count();
  if (config.horizon < 1) fail(ErrorKind::InvalidHorizon, "horizon must be at least one slot");
  if (!(config.warmup_fraction >= 0.0 && config.warmup_fraction < 1.0)) {
    fail(ErrorKind::Validation, "warm-up fraction must lie in [0, 1)");
  }

  Scheduler scheduler(config.policy, model.estimator.kind, model.channels, config.gamma);
  Simulator sim(model, *config.stats, std::move(scheduler), config.arrivals, config.qos);
  SystemState state = SystemState::initial(n, config.initial_backlog);
  Rng rng = make_stream(config.seed, config.stream);

  MetricsLog log;
  log.horizon = config.horizon;
  log.initial_backlog = state.q;
  log.arrivals_total.assign(n, 0);
  log.delivered_total.assign(n, 0);
  log.drops_total.assign(n, 0);
  log.rt_drop_ratio.assign(n, std::numeric_limits<double>::quiet_NaN());
  log.rg_rate.assign(n, std::numeric_limits<double>::quiet_NaN());
  log.rg_rate_sd.assign(n, std::numeric_limits<double>::quiet_NaN());
  log.rt_drop_ratio_se.assign(n, std::numeric_limits<double>::quiet_NaN());
  log.rg_rate_se.assign(n, std::numeric_limits<double>::quiet_NaN());
  log.classes = config.qos ? config.qos->classes
                           : std::vector<TrafficClass>(n, TrafficClass::BestEffort);

  std::vector<double> backlog(n);
  if (!config.qos) {
    const std::int64_t warmup =
        static_cast<std::int64_t>(std::floor(config.warmup_fraction * static_cast<double>(config.horizon)));
    const std::int64_t measured = config.horizon - warmup;
    if (measured < 1) fail(ErrorKind::InvalidHorizon, "no slots left after warm-up");
    MetricsAccumulator acc(n, measured);
    for (std::int64_t t = 0; t < config.horizon; ++t) {
      const bool in_window = t >= warmup;
      SlotRecord rec = sim.step_slot(state, rng);
      if (in_window) {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          backlog[i] = static_cast<double>(rec.q_before[i]);
          total += backlog[i];
        }
        acc.slot(backlog, total, total, lyapunov(rec.q_after) - lyapunov(rec.q_before));
      }
      for (std::size_t i = 0; i < n; ++i) {
        log.arrivals_total[i] += rec.arrivals[i];
        log.delivered_total[i] += rec.delivered[i];
        if (in_window) acc.flow(i, rec.arrivals[i], rec.delivered[i]);
      }
      if (trace) trace->append(rec);
    }
    acc.finish(log, std::vector<bool>(n, true), config.divergence);
  } else {
    const auto& qos = *config.qos;
    const auto t_len = static_cast<std::int64_t>(qos.frame_length);
    const std::int64_t frames = config.horizon / t_len;
    const std::int64_t warmup_frames =
        static_cast<std::int64_t>(std::floor(config.warmup_fraction * static_cast<double>(frames)));
    const std::int64_t measured_frames = frames - warmup_frames;
    if (frames < 1 || measured_frames < 1) {
      fail(ErrorKind::InvalidHorizon, "horizon leaves no complete frame after warm-up");
    }
    MetricsAccumulator acc(n, measured_frames * t_len);
    std::vector<std::int64_t> rt_arrivals(n, 0), rt_drops(n, 0);
    std::vector<double> rg_sum(n, 0.0), rg_sq(n, 0.0);
    std::vector<bool> real(n);
    for (std::size_t i = 0; i < n; ++i) real[i] = qos.classes[i] != TrafficClass::RateGuaranteed;
    const std::size_t batches = static_cast<std::size_t>(std::min<std::int64_t>(kErrorBatches, measured_frames));
    std::vector<double> batch_drops(n * batches, 0.0), batch_arrivals(n * batches, 0.0),
        batch_served(n * batches, 0.0);

    for (std::int64_t k = 0; k < frames; ++k) {
      const bool in_window = k >= warmup_frames;
      FrameRecord frame = sim.step_frame(state, rng);
      // RT buffers as seen at each slot start: arrivals minus what was
      // delivered earlier in the frame.
      std::vector<std::int64_t> rt_left(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (qos.classes[i] == TrafficClass::RealTime) rt_left[i] = frame.arrivals[i];
      }
      for (const auto& rec : frame.slots) {
        if (in_window) {
          double diagnostic = 0.0;
          double total = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            switch (qos.classes[i]) {
              case TrafficClass::BestEffort:
                backlog[i] = static_cast<double>(rec.q_before[i]);
                diagnostic += backlog[i];
                break;
              case TrafficClass::RealTime:
                backlog[i] = static_cast<double>(rt_left[i]);
                break;
              case TrafficClass::RateGuaranteed:
                backlog[i] = 0.0;
                break;
            }
            total += backlog[i];
          }
          acc.slot(backlog, diagnostic, total, lyapunov(rec.q_after) - lyapunov(rec.q_before));
        }
        for (std::size_t i = 0; i < n; ++i) {
          if (qos.classes[i] == TrafficClass::RealTime) rt_left[i] -= rec.delivered[i];
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        const bool counts = qos.classes[i] != TrafficClass::RateGuaranteed;
        const std::int64_t arrivals = counts ? frame.arrivals[i] : 0;
        log.arrivals_total[i] += arrivals;
        log.delivered_total[i] += frame.frame_service[i];
        log.drops_total[i] += frame.drops[i];
        if (!in_window) continue;
        acc.flow(i, arrivals, frame.frame_service[i]);
        const std::size_t batch =
            i * batches + static_cast<std::size_t>((k - warmup_frames) * static_cast<std::int64_t>(batches) / measured_frames);
        if (qos.classes[i] == TrafficClass::RealTime) {
          rt_arrivals[i] += frame.arrivals[i];
          rt_drops[i] += frame.drops[i];
          batch_arrivals[batch] += static_cast<double>(frame.arrivals[i]);
          batch_drops[batch] += static_cast<double>(frame.drops[i]);
        } else if (qos.classes[i] == TrafficClass::RateGuaranteed) {
          const double served = static_cast<double>(frame.frame_service[i]);
          rg_sum[i] += served;
          rg_sq[i] += served * served;
          batch_served[batch] += served;
        }
      }
    }
    acc.finish(log, real, config.divergence);
    log.measured_frames = measured_frames;
    const double f = static_cast<double>(measured_frames);
    for (std::size_t i = 0; i < n; ++i) {
      if (qos.classes[i] == TrafficClass::RealTime) {
        log.rt_drop_ratio[i] =
            rt_arrivals[i] > 0 ? static_cast<double>(rt_drops[i]) / static_cast<double>(rt_arrivals[i]) : 0.0;
        std::vector<double> ratios;
        for (std::size_t b = 0; b < batches; ++b) {
          const double a = batch_arrivals[i * batches + b];
          ratios.push_back(a > 0.0 ? batch_drops[i * batches + b] / a : 0.0);
        }
        log.rt_drop_ratio_se[i] = batch_standard_error(ratios);
      } else if (qos.classes[i] == TrafficClass::RateGuaranteed) {
        log.rg_rate[i] = rg_sum[i] / f;
        log.rg_rate_sd[i] = std::sqrt(std::max(0.0, rg_sq[i] / f - log.rg_rate[i] * log.rg_rate[i]));
        std::vector<double> rates;
        for (std::size_t b = 0; b < batches; ++b) {
          const double frames_in_batch = static_cast<double>(
              (static_cast<std::int64_t>(b + 1) * measured_frames + static_cast<std::int64_t>(batches) - 1) /
                  static_cast<std::int64_t>(batches) -
              (static_cast<std::int64_t>(b) * measured_frames + static_cast<std::int64_t>(batches) - 1) /
                  static_cast<std::int64_t>(batches));
          rates.push_back(frames_in_batch > 0.0 ? batch_served[i * batches + b] / frames_in_batch : 0.0);
        }
        log.rg_rate_se[i] = batch_standard_error(rates);
      }
    }
  }
  log.final_backlog = state.q;
  for (std::size_t i = 0; i < n; ++i) log.final_backlog[i] += state.rt_buffer[i];
  log.final_y = state.y;
  log.final_z = state.z;
  return log;
}

double little_delay(const MetricsLog& log) {
  if (!(log.aggregate_arrival_rate > 0.0)) fail(ErrorKind::ZeroArrivals, "no arrivals were measured");
  return log.mean_total_backlog / log.aggregate_arrival_rate;
}

}  // namespace fadesched
