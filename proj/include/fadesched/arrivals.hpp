#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadesched/rng.hpp"

namespace fadesched {

enum class ArrivalKind { Zero, Bernoulli, Binomial, Deterministic };

const char* to_string(ArrivalKind kind);

/// i.i.d. per-slot (or per-frame) arrival law of one user.
/// Binomial(n, mean) means n trials with success probability mean / n.
struct ArrivalSpec {
  ArrivalKind kind = ArrivalKind::Zero;
  double mean = 0.0;
  int trials = 1;  // Binomial only

  static ArrivalSpec zero() { return {}; }
  static ArrivalSpec bernoulli(double p) { return {ArrivalKind::Bernoulli, p, 1}; }
  static ArrivalSpec binomial(int trials, double mean) { return {ArrivalKind::Binomial, mean, trials}; }
  static ArrivalSpec deterministic(int rate) {
    return {ArrivalKind::Deterministic, static_cast<double>(rate), 1};
  }

  // Same law with a different mean (kind and trials kept).
  ArrivalSpec with_mean(double new_mean) const;

  void validate() const;
  double second_moment() const;

  nlohmann::json to_json() const;
  static ArrivalSpec from_json(const nlohmann::json& j);

  friend bool operator==(const ArrivalSpec&, const ArrivalSpec&) = default;
};

/// Inversion sampler with a precomputed cdf.
class ArrivalSampler {
 public:
  explicit ArrivalSampler(const ArrivalSpec& spec);
  std::int64_t operator()(Rng& rng) const;

 private:
  ArrivalKind kind_;
  std::int64_t constant_ = 0;
  std::vector<double> cdf_;
};

}  // namespace fadesched
