#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "fadesched/arrivals.hpp"
#include "fadesched/channel_model.hpp"
#include "fadesched/dynamics.hpp"
#include "fadesched/policy.hpp"

namespace fadesched {

inline constexpr double kVerdictTolerance = 1e-9;

enum class Verdict { Inside, Boundary, Outside };
const char* to_string(Verdict v);

// Product: one variable per (joint estimate, user). Column: columns are the
// service vectors of priority rules, priced by the support function. Both
// solve the same LP; Auto picks Product while the joint space is small.
enum class LpMethod { Auto, Product, Column };

inline constexpr std::size_t kProductVariableCap = 4096;

struct RegionCertificate {
  Verdict verdict = Verdict::Outside;
  double epsilon = 0.0;          // optimal uniform slack (negative outside)
  StatWeights gamma;             // achieves epsilon
  std::vector<double> service;   // expected per-user service under gamma
  std::vector<double> alpha;     // separating direction, sums to one
  LpMethod method = LpMethod::Product;
  std::size_t lp_solves = 0;
};

// h(w) = E[max_i w_i c_i(S_i)] for independent users, w >= 0.
double support_value(std::span<const double> w, std::span<const ConditionalStats> stats);

// Expected service vector of the priority rule with weights w (the rule used
// by StatWeights mixtures, same tie-breaking).
std::vector<double> vertex_service(std::span<const double> w, std::span<const ConditionalStats> stats);

// Expected per-user service of STAT with the given weights.
std::vector<double> stat_service(const StatWeights& gamma, std::span<const ConditionalStats> stats);

// Number of joint estimates, saturating at UINT64_MAX.
std::uint64_t joint_symbol_count(std::span<const ConditionalStats> stats);

RegionCertificate membership(std::span<const double> lambda, std::span<const ConditionalStats> stats,
                             LpMethod method = LpMethod::Auto);

// Largest theta with theta * direction not outside, to 1e-6.
double boundary_scale(std::span<const double> direction, std::span<const ConditionalStats> stats,
                      LpMethod method = LpMethod::Auto);

// Throws NotInRegion unless lambda is strictly inside.
StatWeights stat_weights(std::span<const double> lambda, std::span<const ConditionalStats> stats);

struct DelayBoundInputs {
  std::size_t users = 0;
  double sum_second_moment = 0.0;
  double sum_mean = 0.0;
  double mu = 0.0;
  double rho = 0.0;
  double k = 0.0;

  double bound() const;
};

struct DelayBound {
  double bound = 0.0;
  double theta = 0.0;
  DelayBoundInputs inputs;
};

// K for a cell whose per-slot service never exceeds channels * x_max.
double service_constant(std::size_t channels, int x_max, std::span<const ArrivalSpec> arrivals);

DelayBound delay_bound(std::span<const ArrivalSpec> arrivals, std::span<const ConditionalStats> stats);

// B = sum_i (E[A_i^2] + (M x_max)^2).
double drift_constant(std::span<const ArrivalSpec> arrivals, std::size_t channels, int x_max);

struct DriftSample {
  std::int64_t t = 0;
  double lyapunov = 0.0;
  double drift = 0.0;
  double bound = 0.0;
};

struct DriftBucket {
  double lo = 0.0;  // total backlog range covered
  double hi = 0.0;
  std::size_t count = 0;
  double mean_drift = 0.0;
  double mean_bound = 0.0;
  double mean_excess = 0.0;  // mean of drift - bound
  double standard_error = 0.0;
  bool checked = false;
  bool violated = false;
};

struct DriftReport {
  double b = 0.0;
  std::vector<DriftSample> samples;
  std::vector<DriftBucket> buckets;
  std::size_t checked = 0;
  std::size_t violations = 0;
  double mean_drift = 0.0;

  double violation_fraction() const {
    return checked ? static_cast<double>(violations) / static_cast<double>(checked) : 0.0;
  }
};

inline constexpr std::size_t kMinBucketSamples = 30;

// Compares bucket-averaged one-slot drift of sum Q_i^2 with the one-slot
// bound. Buckets are deciles of total backlog. Throws EmptyTrace.
DriftReport drift_check(const SlotTrace& trace, std::span<const ArrivalSpec> arrivals,
                        std::span<const ConditionalStats> stats);

nlohmann::json certificate_to_json(const RegionCertificate& cert);

}  // namespace fadesched
