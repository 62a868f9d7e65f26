#include "fadesched/arrivals.hpp"

#include <algorithm>
#include <cmath>

#include "fadesched/errors.hpp"

namespace fadesched {

const char* to_string(ArrivalKind kind) {
  switch (kind) {
    case ArrivalKind::Zero: return "zero";
    case ArrivalKind::Bernoulli: return "bernoulli";
    case ArrivalKind::Binomial: return "binomial";
    case ArrivalKind::Deterministic: return "deterministic";
  }
  return "zero";
}

ArrivalSpec ArrivalSpec::with_mean(double new_mean) const {
  ArrivalSpec out = *this;
  out.mean = new_mean;
  if (kind == ArrivalKind::Zero && new_mean > 0.0) out.kind = ArrivalKind::Bernoulli;
  return out;
}

void ArrivalSpec::validate() const {
  if (!(mean >= 0.0) || !std::isfinite(mean)) fail(ErrorKind::Validation, "arrival mean must be >= 0");
  switch (kind) {
    case ArrivalKind::Zero:
      if (mean != 0.0) fail(ErrorKind::Validation, "zero arrivals must have mean 0");
      break;
    case ArrivalKind::Bernoulli:
      if (mean > 1.0) fail(ErrorKind::Validation, "bernoulli mean must be <= 1");
      break;
    case ArrivalKind::Binomial:
      if (trials < 1) fail(ErrorKind::Validation, "binomial needs at least one trial");
      if (mean > trials) fail(ErrorKind::Validation, "binomial mean must not exceed its trial count");
      break;
    case ArrivalKind::Deterministic:
      if (mean != std::floor(mean)) fail(ErrorKind::Validation, "deterministic rate must be an integer");
      break;
  }
}

double ArrivalSpec::second_moment() const {
  switch (kind) {
    case ArrivalKind::Zero: return 0.0;
    case ArrivalKind::Bernoulli: return mean;
    case ArrivalKind::Binomial: {
      const double p = mean / trials;
      return trials * p * (1.0 - p) + mean * mean;
    }
    case ArrivalKind::Deterministic: return mean * mean;
  }
  return 0.0;
}

nlohmann::json ArrivalSpec::to_json() const {
  nlohmann::json j{{"kind", to_string(kind)}, {"mean", mean}};
  if (kind == ArrivalKind::Binomial) j["trials"] = trials;
  return j;
}

ArrivalSpec ArrivalSpec::from_json(const nlohmann::json& j) {
  try {
    ArrivalSpec spec;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "zero") {
      spec.kind = ArrivalKind::Zero;
    } else if (kind == "bernoulli") {
      spec.kind = ArrivalKind::Bernoulli;
    } else if (kind == "binomial") {
      spec.kind = ArrivalKind::Binomial;
      spec.trials = j.at("trials").get<int>();
    } else if (kind == "deterministic") {
      spec.kind = ArrivalKind::Deterministic;
    } else {
      fail(ErrorKind::Validation, "unknown arrival kind '" + kind + "'");
    }
    spec.mean = j.value("mean", 0.0);
    spec.validate();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Validation, std::string("arrivals: ") + e.what());
  }
}

ArrivalSampler::ArrivalSampler(const ArrivalSpec& spec) : kind_(spec.kind) {
  spec.validate();
  switch (spec.kind) {
    case ArrivalKind::Zero:
      break;
    case ArrivalKind::Deterministic:
      constant_ = static_cast<std::int64_t>(spec.mean);
      break;
    case ArrivalKind::Bernoulli:
      cdf_ = {1.0 - spec.mean, 1.0};
      break;
    case ArrivalKind::Binomial: {
      const int n = spec.trials;
      const double p = spec.mean / n;
      cdf_.resize(static_cast<std::size_t>(n) + 1);
      double acc = 0.0;
      for (int k = 0; k <= n; ++k) {
        const double log_pmf = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                               (k > 0 ? k * std::log(p) : 0.0) +
                               (n - k > 0 ? (n - k) * std::log1p(-p) : 0.0);
        acc += std::exp(log_pmf);
        cdf_[static_cast<std::size_t>(k)] = acc;
      }
      cdf_.back() = 1.0;
      break;
    }
  }
}

std::int64_t ArrivalSampler::operator()(Rng& rng) const {
  switch (kind_) {
    case ArrivalKind::Zero: return 0;
    case ArrivalKind::Deterministic: return constant_;
    default: break;
  }
  const double u = uniform01(rng);
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  return std::min<std::int64_t>(it - cdf_.begin(), static_cast<std::int64_t>(cdf_.size()) - 1);
}

}  // namespace fadesched
