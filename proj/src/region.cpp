#include "fadesched/region.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "fadesched/errors.hpp"
#include "fadesched/simplex.hpp"

namespace fadesched {

namespace {

constexpr double kPricingTolerance = 1e-10;
constexpr std::size_t kMaxColumns = 2000;
constexpr double kBisectionTolerance = 1e-7;

void check_stats(std::span<const ConditionalStats> stats) {
  if (stats.empty()) fail(ErrorKind::Validation, "no users");
  for (const auto& st : stats) {
    double total = 0.0;
    for (double p : st.p_s()) {
      if (!(p >= 0.0)) fail(ErrorKind::DegenerateStats, "negative estimate probability");
      total += p;
    }
    if (std::abs(total - 1.0) > 1e-9) fail(ErrorKind::DegenerateStats, "estimate pmf does not sum to one");
  }
}

void check_rates(std::span<const double> lambda, std::size_t users, const char* what) {
  if (lambda.size() != users) fail(ErrorKind::Validation, std::string(what) + " needs one entry per user");
  for (double v : lambda) {
    if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::Validation, std::string(what) + " must be >= 0");
  }
}

// Per-user distribution of w_i c_i(S_i), sorted by value, with P(V < v) and
// P(V <= v) lookups.
class WeightedValues {
 public:
  WeightedValues(double w, const ConditionalStats& st) {
    for (std::size_t s = 0; s < st.symbol_count(); ++s) {
      if (st.p_s(s) > 0.0) points_.emplace_back(w * st.vertex_rate(s), st.p_s(s));
    }
    std::sort(points_.begin(), points_.end());
    cumulative_.reserve(points_.size());
    double acc = 0.0;
    for (const auto& pt : points_) cumulative_.push_back(acc += pt.second);
  }

  double below(double v) const {
    auto it = std::lower_bound(points_.begin(), points_.end(), v,
                               [](const auto& pt, double x) { return pt.first < x; });
    return it == points_.begin() ? 0.0 : cumulative_[static_cast<std::size_t>(it - points_.begin()) - 1];
  }
  double at_most(double v) const {
    auto it = std::upper_bound(points_.begin(), points_.end(), v,
                               [](double x, const auto& pt) { return x < pt.first; });
    return it == points_.begin() ? 0.0 : cumulative_[static_cast<std::size_t>(it - points_.begin()) - 1];
  }
  const std::vector<std::pair<double, double>>& points() const { return points_; }

 private:
  std::vector<std::pair<double, double>> points_;
  std::vector<double> cumulative_;
};

struct LpOutcome {
  double epsilon = 0.0;
  StatWeights gamma;
  std::vector<double> alpha;
  std::size_t solves = 0;
};

std::vector<double> normalized(std::vector<double> y) {
  const double total = std::accumulate(y.begin(), y.end(), 0.0);
  if (total > 0.0) {
    for (double& v : y) v /= total;
  } else {
    std::fill(y.begin(), y.end(), 1.0 / static_cast<double>(y.size()));
  }
  return y;
}

void require_optimal(const LpResult& r) {
  if (r.status != LpResult::Status::Optimal) fail(ErrorKind::DegenerateStats, "region LP did not converge");
}

// maximize e with e - (service)_i <= L - lambda_i, where epsilon = e - L.
LpOutcome solve_product(std::span<const double> lambda, std::span<const ConditionalStats> stats) {
  const std::size_t n = stats.size();
  std::vector<std::size_t> radices(n);
  std::size_t joint = 1;
  for (std::size_t i = 0; i < n; ++i) {
    radices[i] = stats[i].symbol_count();
    joint *= radices[i];
  }
  struct Var {
    std::size_t joint;
    std::size_t user;
    double coef;
  };
  std::vector<Var> vars;
  std::vector<std::size_t> digits(n, 0);
  for (std::size_t s = 0; s < joint; ++s) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) p *= stats[i].p_s(digits[i]);
    for (std::size_t i = 0; i < n; ++i) {
      const double coef = p * stats[i].vertex_rate(digits[i]);
      if (coef > 0.0) vars.push_back({s, i, coef});
    }
    for (std::size_t i = 0; i < n && ++digits[i] == radices[i]; ++i) digits[i] = 0;
  }

  const double l = *std::max_element(lambda.begin(), lambda.end());
  const std::size_t rows = n + joint;
  const std::size_t cols = 1 + vars.size();
  std::vector<double> a(rows * cols, 0.0), b(rows), c(cols, 0.0);
  c[0] = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    a[i * cols] = 1.0;
    b[i] = l - lambda[i];
  }
  for (std::size_t s = 0; s < joint; ++s) b[n + s] = 1.0;
  for (std::size_t k = 0; k < vars.size(); ++k) {
    a[vars[k].user * cols + 1 + k] = -vars[k].coef;
    a[(n + vars[k].joint) * cols + 1 + k] = 1.0;
  }
  LpResult r = DenseSimplex(rows, cols, std::move(a), std::move(b), std::move(c)).solve();
  require_optimal(r);

  std::vector<double> gamma(joint * n, 0.0);
  for (std::size_t k = 0; k < vars.size(); ++k) {
    gamma[vars[k].joint * n + vars[k].user] = r.x[1 + k];
  }
  LpOutcome out;
  out.epsilon = r.objective - l;
  out.gamma = StatWeights::table(std::move(radices), std::move(gamma));
  out.alpha = normalized({r.dual.begin(), r.dual.begin() + static_cast<std::ptrdiff_t>(n)});
  out.solves = 1;
  return out;
}

LpOutcome solve_columns(std::span<const double> lambda, std::span<const ConditionalStats> stats) {
  const std::size_t n = stats.size();
  const double l = *std::max_element(lambda.begin(), lambda.end());
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> columns;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> w(n, 0.0);
    w[i] = 1.0;
    columns.push_back(vertex_service(w, stats));
    weights.push_back(std::move(w));
  }

  LpOutcome out;
  for (;;) {
    const std::size_t rows = n + 1;
    const std::size_t cols = 1 + columns.size();
    std::vector<double> a(rows * cols, 0.0), b(rows), c(cols, 0.0);
    c[0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      a[i * cols] = 1.0;
      b[i] = l - lambda[i];
      for (std::size_t k = 0; k < columns.size(); ++k) a[i * cols + 1 + k] = -columns[k][i];
    }
    b[n] = 1.0;
    for (std::size_t k = 0; k < columns.size(); ++k) a[n * cols + 1 + k] = 1.0;
    LpResult r = DenseSimplex(rows, cols, std::move(a), std::move(b), std::move(c)).solve();
    require_optimal(r);
    ++out.solves;

    std::vector<double> y(r.dual.begin(), r.dual.begin() + static_cast<std::ptrdiff_t>(n));
    const double price = r.dual[n];
    const double gain = support_value(y, stats) - price;
    if (gain <= kPricingTolerance * std::max(1.0, price) || columns.size() >= kMaxColumns) {
      std::vector<StatWeights::PriorityRule> rules;
      for (std::size_t k = 0; k < columns.size(); ++k) {
        if (r.x[1 + k] > 0.0) rules.push_back({r.x[1 + k], weights[k]});
      }
      out.epsilon = r.objective - l;
      out.gamma = StatWeights::mixture(n, std::move(rules));
      out.alpha = normalized(std::move(y));
      return out;
    }
    columns.push_back(vertex_service(y, stats));
    weights.push_back(std::move(y));
  }
}

}  // namespace

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::Inside: return "inside";
    case Verdict::Boundary: return "boundary";
    case Verdict::Outside: return "outside";
  }
  return "outside";
}

std::uint64_t joint_symbol_count(std::span<const ConditionalStats> stats) {
  std::uint64_t joint = 1;
  for (const auto& st : stats) {
    const std::uint64_t r = st.symbol_count();
    if (r != 0 && joint > std::numeric_limits<std::uint64_t>::max() / r) {
      return std::numeric_limits<std::uint64_t>::max();
    }
    joint *= r;
  }
  return joint;
}

double support_value(std::span<const double> w, std::span<const ConditionalStats> stats) {
  check_rates(w, stats.size(), "weights");
  std::vector<WeightedValues> dists;
  std::vector<double> levels{0.0};
  for (std::size_t i = 0; i < stats.size(); ++i) {
    dists.emplace_back(w[i], stats[i]);
    for (const auto& pt : dists.back().points()) levels.push_back(pt.first);
  }
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  double value = 0.0;
  double previous = 0.0;
  for (double t : levels) {
    double cdf = 1.0;
    for (const auto& d : dists) cdf *= d.at_most(t);
    value += t * (cdf - previous);
    previous = cdf;
  }
  return value;
}

std::vector<double> vertex_service(std::span<const double> w, std::span<const ConditionalStats> stats) {
  check_rates(w, stats.size(), "weights");
  const std::size_t n = stats.size();
  std::vector<WeightedValues> dists;
  for (std::size_t i = 0; i < n; ++i) dists.emplace_back(w[i], stats[i]);
  std::vector<double> u(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t s = 0; s < stats[i].symbol_count(); ++s) {
      const double v = w[i] * stats[i].vertex_rate(s);
      if (!(v > 0.0) || stats[i].p_s(s) <= 0.0) continue;
      double win = stats[i].p_s(s);
      for (std::size_t k = 0; k < n && win > 0.0; ++k) {
        if (k == i) continue;
        win *= k < i ? dists[k].below(v) : dists[k].at_most(v);
      }
      u[i] += win * stats[i].vertex_rate(s);
    }
  }
  return u;
}

std::vector<double> stat_service(const StatWeights& gamma, std::span<const ConditionalStats> stats) {
  const std::size_t n = stats.size();
  if (gamma.users() != n) fail(ErrorKind::Validation, "gamma has the wrong user count");
  std::vector<double> u(n, 0.0);
  if (!gamma.is_table()) {
    for (const auto& rule : gamma.rules()) {
      const auto v = vertex_service(rule.weights, stats);
      for (std::size_t i = 0; i < n; ++i) u[i] += rule.probability * v[i];
    }
    return u;
  }
  const std::uint64_t joint = joint_symbol_count(stats);
  if (joint > kEnumerationCap) fail(ErrorKind::EnumerationTooLarge, "joint estimate space too large");
  std::vector<std::size_t> digits(n, 0);
  for (std::uint64_t s = 0; s < joint; ++s) {
    double p = 1.0;
    for (std::size_t i = 0; i < n; ++i) p *= stats[i].p_s(digits[i]);
    if (p > 0.0) {
      const auto g = gamma.distribution(digits, stats);
      for (std::size_t i = 0; i < n; ++i) u[i] += p * g[i] * stats[i].vertex_rate(digits[i]);
    }
    for (std::size_t i = 0; i < n && ++digits[i] == stats[i].symbol_count(); ++i) digits[i] = 0;
  }
  return u;
}

RegionCertificate membership(std::span<const double> lambda, std::span<const ConditionalStats> stats,
                             LpMethod method) {
  check_stats(stats);
  check_rates(lambda, stats.size(), "rates");
  if (method == LpMethod::Auto) {
    const std::uint64_t joint = joint_symbol_count(stats);
    const bool small = joint <= kProductVariableCap / stats.size();
    method = small ? LpMethod::Product : LpMethod::Column;
  }
  if (method == LpMethod::Product && joint_symbol_count(stats) > kEnumerationCap) {
    fail(ErrorKind::EnumerationTooLarge, "joint estimate space too large for the product LP");
  }
  LpOutcome lp = method == LpMethod::Product ? solve_product(lambda, stats) : solve_columns(lambda, stats);

  RegionCertificate cert;
  cert.epsilon = lp.epsilon;
  cert.verdict = lp.epsilon > kVerdictTolerance     ? Verdict::Inside
                 : lp.epsilon >= -kVerdictTolerance ? Verdict::Boundary
                                                    : Verdict::Outside;
  cert.service = stat_service(lp.gamma, stats);
  cert.gamma = std::move(lp.gamma);
  cert.alpha = std::move(lp.alpha);
  cert.method = method;
  cert.lp_solves = lp.solves;
  return cert;
}

double boundary_scale(std::span<const double> direction, std::span<const ConditionalStats> stats,
                      LpMethod method) {
  check_stats(stats);
  check_rates(direction, stats.size(), "direction");
  const double total = std::accumulate(direction.begin(), direction.end(), 0.0);
  if (!(total > 0.0)) fail(ErrorKind::Validation, "direction must be non-zero");

  std::vector<double> point(direction.size());
  auto feasible = [&](double theta) {
    for (std::size_t i = 0; i < point.size(); ++i) point[i] = theta * direction[i];
    return membership(point, stats, method).verdict != Verdict::Outside;
  };
  const std::vector<double> ones(stats.size(), 1.0);
  double lo = 0.0;
  double hi = support_value(ones, stats) / total;
  if (feasible(hi)) return hi;
  while (hi - lo > kBisectionTolerance) {
    const double mid = 0.5 * (lo + hi);
    (feasible(mid) ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

StatWeights stat_weights(std::span<const double> lambda, std::span<const ConditionalStats> stats) {
  RegionCertificate cert = membership(lambda, stats);
  if (cert.verdict != Verdict::Inside) {
    fail(ErrorKind::NotInRegion, std::string("rates are ") + to_string(cert.verdict) + " the region");
  }
  return std::move(cert.gamma);
}

double DelayBoundInputs::bound() const {
  return static_cast<double>(users) * (1.0 + k) * sum_second_moment / (2.0 * mu * (1.0 - rho) * sum_mean);
}

double service_constant(std::size_t channels, int x_max, std::span<const ArrivalSpec> arrivals) {
  double min_second = std::numeric_limits<double>::infinity();
  for (const auto& a : arrivals) min_second = std::min(min_second, a.second_moment());
  if (!(min_second > 0.0)) fail(ErrorKind::ZeroSecondMoment, "every user needs E[A^2] > 0");
  const double peak = static_cast<double>(channels) * x_max;
  return peak * peak / min_second;
}

DelayBound delay_bound(std::span<const ArrivalSpec> arrivals, std::span<const ConditionalStats> stats) {
  check_stats(stats);
  if (arrivals.size() != stats.size()) fail(ErrorKind::Validation, "one arrival spec per user is required");
  DelayBoundInputs in;
  in.users = stats.size();
  in.k = service_constant(stats[0].channels(), stats[0].states().x_max(), arrivals);
  std::vector<double> lambda;
  for (const auto& a : arrivals) {
    lambda.push_back(a.mean);
    in.sum_mean += a.mean;
    in.sum_second_moment += a.second_moment();
  }
  if (membership(lambda, stats).verdict != Verdict::Inside) {
    fail(ErrorKind::NotInRegion, "arrival rates are not strictly inside the region");
  }
  DelayBound out;
  out.theta = boundary_scale(lambda, stats);
  in.rho = 1.0 / out.theta;
  if (!(in.rho < 1.0)) fail(ErrorKind::NotInRegion, "arrival rates are not strictly inside the region");
  in.mu = std::numeric_limits<double>::infinity();
  for (const auto& st : stats) in.mu = std::min(in.mu, st.mean_vertex_rate());
  out.inputs = in;
  out.bound = in.bound();
  return out;
}

double drift_constant(std::span<const ArrivalSpec> arrivals, std::size_t channels, int x_max) {
  const double peak = static_cast<double>(channels) * x_max;
  double b = 0.0;
  for (const auto& a : arrivals) b += a.second_moment() + peak * peak;
  return b;
}

DriftReport drift_check(const SlotTrace& trace, std::span<const ArrivalSpec> arrivals,
                        std::span<const ConditionalStats> stats) {
  if (trace.size() == 0) fail(ErrorKind::EmptyTrace, "trace has no slots");
  const std::size_t n = trace.users();
  if (stats.size() != n || arrivals.size() != n) {
    fail(ErrorKind::Validation, "trace, arrivals and stats disagree on the user count");
  }
  DriftReport report;
  report.b = drift_constant(arrivals, trace.channels(), stats[0].states().x_max());
  report.samples.reserve(trace.size());
  std::vector<double> totals(trace.size());
  std::vector<double> service(n);
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const auto before = trace.q_before(t);
    const auto after = trace.q_after(t);
    const auto symbols = trace.symbols(t);
    const auto users = trace.grant_user(t);
    const auto rates = trace.grant_rate(t);
    std::fill(service.begin(), service.end(), 0.0);
    for (std::size_t j = 0; j < trace.channels(); ++j) {
      if (users[j] < 0) continue;
      const auto i = static_cast<std::size_t>(users[j]);
      if (symbols[i] >= stats[i].symbol_count()) {
        fail(ErrorKind::Validation, "drift check needs estimates known to the statistics");
      }
      service[i] += rates[j] * stats[i].success_prob(j, symbols[i], rates[j]);
    }
    DriftSample sample;
    sample.t = static_cast<std::int64_t>(t);
    double after_l = 0.0;
    double slack = 0.0;
    totals[t] = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = static_cast<double>(before[i]);
      sample.lyapunov += q * q;
      after_l += static_cast<double>(after[i]) * static_cast<double>(after[i]);
      slack += q * (arrivals[i].mean - service[i]);
      totals[t] += q;
    }
    sample.drift = after_l - sample.lyapunov;
    sample.bound = report.b + 2.0 * slack;
    report.mean_drift += sample.drift;
    report.samples.push_back(sample);
  }
  report.mean_drift /= static_cast<double>(trace.size());

  std::vector<double> sorted = totals;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> cuts;
  for (std::size_t k = 1; k < 10; ++k) cuts.push_back(sorted[k * sorted.size() / 10]);

  report.buckets.assign(10, {});
  std::vector<double> sum_sq(10, 0.0);
  for (auto& b : report.buckets) {
    b.lo = std::numeric_limits<double>::infinity();
    b.hi = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t t = 0; t < totals.size(); ++t) {
    const auto k = static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), totals[t]) - cuts.begin());
    auto& b = report.buckets[k];
    const double excess = report.samples[t].drift - report.samples[t].bound;
    b.lo = std::min(b.lo, totals[t]);
    b.hi = std::max(b.hi, totals[t]);
    ++b.count;
    b.mean_drift += report.samples[t].drift;
    b.mean_bound += report.samples[t].bound;
    b.mean_excess += excess;
    sum_sq[k] += excess * excess;
  }
  for (std::size_t k = 0; k < report.buckets.size(); ++k) {
    auto& b = report.buckets[k];
    if (b.count == 0) continue;
    const double c = static_cast<double>(b.count);
    b.mean_drift /= c;
    b.mean_bound /= c;
    b.mean_excess /= c;
    const double var = std::max(0.0, sum_sq[k] / c - b.mean_excess * b.mean_excess);
    b.standard_error = std::sqrt(var / c);
    b.checked = b.count >= kMinBucketSamples;
    if (!b.checked) continue;
    ++report.checked;
    b.violated = b.mean_excess > 0.0 && b.mean_excess > 3.0 * b.standard_error;
    if (b.violated) ++report.violations;
  }
  return report;
}

nlohmann::json certificate_to_json(const RegionCertificate& cert) {
  return {{"verdict", to_string(cert.verdict)},
          {"epsilon", cert.epsilon},
          {"gamma", cert.gamma.to_json()},
          {"service", cert.service},
          {"alpha", cert.alpha}};
}

}  // namespace fadesched
