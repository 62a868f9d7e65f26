#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "fadesched/arrivals.hpp"
#include "fadesched/channel_model.hpp"
#include "fadesched/policy.hpp"
#include "fadesched/rng.hpp"

namespace fadesched {

enum class TrafficClass { RealTime, RateGuaranteed, BestEffort };

const char* to_string(TrafficClass c);
TrafficClass traffic_class_from_string(const std::string& name);

/// Frame-mode description: per-user class, drop-ratio bounds for real-time
/// users, per-frame minimum rates for rate-guaranteed users.
struct QosSetup {
  std::size_t frame_length = 1;
  std::vector<TrafficClass> classes;
  std::vector<double> alpha;  // RT users; ignored elsewhere
  std::vector<double> beta;   // RG users; ignored elsewhere

  void validate(std::size_t users) const;
  friend bool operator==(const QosSetup&, const QosSetup&) = default;
};

struct SystemState {
  std::vector<std::int64_t> q;  // real backlog (BE in frame mode)
  std::int64_t slot = 0;
  // frame mode only
  std::vector<double> y;                 // RT virtual queues
  std::vector<double> z;                 // RG virtual queues
  std::vector<std::int64_t> rt_buffer;   // RT packets still deliverable this frame
  std::int64_t frame = 0;

  static SystemState initial(std::size_t users, std::span<const std::int64_t> backlog = {});
};

/// Everything that happened in one slot.
struct SlotRecord {
  std::int64_t t = 0;
  std::vector<std::int64_t> q_before;
  std::vector<std::int64_t> arrivals;
  std::vector<int> x;                 // user-major, users x channels
  std::vector<std::size_t> symbols;   // stats index per user (SIZE_MAX if unknown)
  Allocation allocation;
  std::vector<char> success;          // per channel
  std::vector<std::int64_t> served;   // mu_i(t)
  std::vector<std::int64_t> delivered;
  std::vector<std::int64_t> q_after;
};

struct FrameRecord {
  std::int64_t k = 0;
  std::vector<std::int64_t> arrivals;
  std::vector<double> phi;
  std::vector<SlotRecord> slots;
  std::vector<std::int64_t> frame_service;  // delivered during the frame
  std::vector<std::int64_t> drops;
  std::vector<double> y_after;
  std::vector<double> z_after;
};

/// Compact per-slot trace (struct of arrays) for drift analysis.
class SlotTrace {
 public:
  SlotTrace(std::size_t users, std::size_t channels) : users_(users), channels_(channels) {}

  void append(const SlotRecord& record);
  std::size_t size() const { return slots_; }
  std::size_t users() const { return users_; }
  std::size_t channels() const { return channels_; }

  std::span<const std::int64_t> q_before(std::size_t t) const { return {&q_before_[t * users_], users_}; }
  std::span<const std::int64_t> q_after(std::size_t t) const { return {&q_after_[t * users_], users_}; }
  std::span<const std::size_t> symbols(std::size_t t) const { return {&symbols_[t * users_], users_}; }
  std::span<const int> grant_user(std::size_t t) const { return {&grant_user_[t * channels_], channels_}; }
  std::span<const int> grant_rate(std::size_t t) const { return {&grant_rate_[t * channels_], channels_}; }

 private:
  std::size_t users_;
  std::size_t channels_;
  std::size_t slots_ = 0;
  std::vector<std::int64_t> q_before_;
  std::vector<std::int64_t> q_after_;
  std::vector<std::size_t> symbols_;
  std::vector<int> grant_user_;  // -1 when idle
  std::vector<int> grant_rate_;
};

/// Binds a model, its statistics, a scheduler and the arrival laws, and
/// advances a SystemState. Holds references: the model and stats must
/// outlive it.
class Simulator {
 public:
  Simulator(const SystemModel& model, std::span<const ConditionalStats> stats, Scheduler scheduler,
            std::vector<ArrivalSpec> arrivals, std::optional<QosSetup> qos = std::nullopt);

  SlotRecord step_slot(SystemState& state, Rng& rng) const;
  FrameRecord step_frame(SystemState& state, Rng& rng) const;

  const std::optional<QosSetup>& qos() const { return qos_; }

 private:
  struct Observation {
    std::vector<int> x;
    std::vector<std::size_t> symbols;
    std::vector<EstimateSymbol> keys;
  };
  Observation observe(Rng& rng) const;
  // Transmits at the granted rates; returns served packets.
  std::vector<std::int64_t> serve(const Observation& obs, const Allocation& alloc,
                                  std::vector<char>& success) const;

  const SystemModel& model_;
  std::span<const ConditionalStats> stats_;
  Scheduler scheduler_;
  std::vector<ArrivalSpec> arrivals_;
  std::vector<ArrivalSampler> samplers_;
  std::optional<QosSetup> qos_;
  bool needs_stats_;
  // joint state index -> stats symbol index, per user (empty if not cached)
  std::vector<std::vector<std::int32_t>> symbol_cache_;
};

SlotRecord step_slot(SystemState& state, const Simulator& sim, Rng& rng);
FrameRecord step_frame(SystemState& state, const Simulator& sim, Rng& rng);

/// Divergence diagnostic on the measured backlog series: divergent when the
/// last-quartile mean exceeds ratio * second-quartile mean + floor.
struct DivergenceRule {
  double ratio = 1.5;
  double floor = 1.0;
  bool operator()(double second_quartile, double last_quartile) const {
    return last_quartile > ratio * second_quartile + floor;
  }
};

struct RunConfig {
  std::shared_ptr<const SystemModel> model;
  std::shared_ptr<const std::vector<ConditionalStats>> stats;
  PolicySpec policy;
  std::optional<StatWeights> gamma;
  std::vector<ArrivalSpec> arrivals;
  std::optional<QosSetup> qos;
  std::int64_t horizon = 0;  // slots
  double warmup_fraction = 0.1;
  std::uint64_t seed = 1;
  std::uint64_t stream = 0;
  std::vector<std::int64_t> initial_backlog;
  DivergenceRule divergence;
};

inline constexpr std::size_t kErrorBatches = 20;

struct MetricsLog {
  std::int64_t horizon = 0;
  std::int64_t measured_slots = 0;
  std::int64_t measured_frames = 0;
  std::vector<TrafficClass> classes;

  double mean_total_backlog = 0.0;
  std::vector<double> per_user_backlog;
  std::vector<double> per_user_throughput;    // delivered per slot
  std::vector<double> per_user_arrival_rate;  // per slot
  double aggregate_arrival_rate = 0.0;

  std::vector<double> rt_drop_ratio;  // NaN for non-RT users
  std::vector<double> rg_rate;        // packets per frame; NaN for non-RG
  std::vector<double> rg_rate_sd;     // per-frame standard deviation
  // batch-means standard errors of the two estimates above
  std::vector<double> rt_drop_ratio_se;
  std::vector<double> rg_rate_se;

  std::array<double, 4> quartile_backlog{};
  bool divergent = false;
  std::vector<double> backlog_series;  // window means over the measured slots
  double mean_drift = 0.0;             // mean one-slot change of sum Q_i^2

  // full-horizon bookkeeping
  std::vector<std::int64_t> arrivals_total;
  std::vector<std::int64_t> delivered_total;
  std::vector<std::int64_t> drops_total;
  std::vector<std::int64_t> initial_backlog;
  std::vector<std::int64_t> final_backlog;  // real queue, plus RT buffer
  std::vector<double> final_y;
  std::vector<double> final_z;
};

MetricsLog run(const RunConfig& config, SlotTrace* trace = nullptr);

/// Mean delay by Little's law: time-average backlog over arrival rate.
double little_delay(const MetricsLog& log);

}  // namespace fadesched
