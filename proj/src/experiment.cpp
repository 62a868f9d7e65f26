#include "fadesched/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "fadesched/errors.hpp"
#include "fadesched/region.hpp"

namespace fadesched {

namespace {

using nlohmann::json;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::Validation, path.string() + ": " + e.what());
  }
}

json qos_to_json(const QosSetup& qos) {
  auto classes = json::array();
  for (auto c : qos.classes) classes.push_back(to_string(c));
  return {{"length", qos.frame_length}, {"classes", classes}, {"alpha", qos.alpha}, {"beta", qos.beta}};
}

QosSetup qos_from_json(const json& j, std::size_t users) {
  QosSetup qos;
  qos.frame_length = j.at("length").get<std::size_t>();
  for (const auto& c : j.at("classes")) qos.classes.push_back(traffic_class_from_string(c.get<std::string>()));
  qos.alpha = j.value("alpha", std::vector<double>(users, 0.0));
  qos.beta = j.value("beta", std::vector<double>(users, 0.0));
  return qos;
}

double per_slot_rate(const ExperimentConfig& config, std::size_t user, const ArrivalSpec& a) {
  if (!config.qos) return a.mean;
  const auto& qos = *config.qos;
  const double t = static_cast<double>(qos.frame_length);
  return qos.classes[user] == TrafficClass::RateGuaranteed ? qos.beta[user] / t : a.mean / t;
}

std::optional<StatWeights> load_gamma(const PolicySpec& spec) {
  if (spec.gamma_file.empty()) return std::nullopt;
  return StatWeights::from_json(read_json(spec.gamma_file));
}

std::vector<double> sweep_values_from(double first, double step, double last) {
  std::vector<double> out;
  for (int k = 0;; ++k) {
    const double v = std::round((first + k * step) * 1e9) / 1e9;
    if (v > last + 1e-12) break;
    out.push_back(v);
  }
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  const std::size_t n = users();
  if (n == 0) fail(ErrorKind::Validation, "model has no users");
  if (policies.empty()) fail(ErrorKind::Validation, "at least one policy is required");
  if (seeds.empty()) fail(ErrorKind::Validation, "seeds must not be empty");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    fail(ErrorKind::Validation, "warmup_fraction must lie in [0, 1)");
  }
  if (arrivals.size() != n) fail(ErrorKind::Validation, "arrivals need one entry per user");
  for (const auto& a : arrivals) a.validate();
  if (!initial_backlog.empty() && initial_backlog.size() != n) {
    fail(ErrorKind::Validation, "initial_backlog needs one entry per user");
  }
  const std::int64_t frame = qos ? static_cast<std::int64_t>(qos->frame_length) : 1;
  if (qos) qos->validate(n);
  if (frame < 1 || horizon < frame) fail(ErrorKind::InvalidHorizon, "horizon must be at least one frame");
  if (sweep) {
    if (sweep->values.empty()) fail(ErrorKind::Validation, "sweep needs at least one value");
    for (std::size_t u : sweep->users) {
      if (u >= n) fail(ErrorKind::Validation, "sweep user index out of range");
    }
    for (double v : sweep->values) {
      if (!(v >= 0.0)) fail(ErrorKind::Validation, "sweep values must be >= 0");
      for (std::size_t u : sweep->users) arrivals[u].with_mean(v).validate();
    }
  }
  for (const auto& p : policies) {
    if (p.kind == PolicyKind::Stat && qos) fail(ErrorKind::Validation, "stat policy is not available in frame mode");
  }
  // also checks the estimator against naive policies
  for (const auto& p : policies) {
    if (p.kind != PolicyKind::Stat) Scheduler(p, model.estimator.kind, model.channels);
  }
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base) {
  ExperimentConfig c;
  try {
    c.id = j.value("id", std::string("experiment"));
    if (j.contains("model_file")) {
      c.model_file = j.at("model_file").get<std::string>();
      std::filesystem::path p = c.model_file;
      if (p.is_relative() && !base.empty()) p = base / p;
      c.model = model_from_json(read_json(p));
    } else {
      c.model = model_from_json(j.at("model"));
    }
    const std::size_t n = c.model.user_count();
    for (const auto& p : j.at("policies")) c.policies.push_back(PolicySpec::from_json(p));
    const auto& arr = j.at("arrivals");
    for (const auto& a : arr.at("users")) c.arrivals.push_back(ArrivalSpec::from_json(a));
    if (arr.contains("sweep")) {
      SweepSpec sweep;
      sweep.values = arr.at("sweep").at("values").get<std::vector<double>>();
      if (arr.at("sweep").contains("users")) {
        sweep.users = arr.at("sweep").at("users").get<std::vector<std::size_t>>();
      } else {
        sweep.users.resize(n);
        std::iota(sweep.users.begin(), sweep.users.end(), std::size_t{0});
      }
      c.sweep = std::move(sweep);
    }
    c.horizon = j.value("horizon", c.horizon);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("initial_backlog")) c.initial_backlog = j.at("initial_backlog").get<std::vector<std::int64_t>>();
    const std::string mode = j.value("mode", std::string(j.contains("frame") ? "frame" : "slot"));
    if (mode == "frame") {
      if (!j.contains("frame")) fail(ErrorKind::Validation, "frame mode needs a frame section");
      c.qos = qos_from_json(j.at("frame"), n);
    } else if (mode != "slot") {
      fail(ErrorKind::Validation, "mode must be 'slot' or 'frame'");
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::Validation, std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["id"] = c.id;
  if (!c.model_file.empty()) {
    j["model_file"] = c.model_file;
  } else {
    j["model"] = model_to_json(c.model);
  }
  j["mode"] = c.qos ? "frame" : "slot";
  auto policies = json::array();
  for (const auto& p : c.policies) policies.push_back(p.to_json());
  j["policies"] = policies;
  auto users = json::array();
  for (const auto& a : c.arrivals) users.push_back(a.to_json());
  j["arrivals"] = {{"users", users}};
  if (c.sweep) j["arrivals"]["sweep"] = {{"values", c.sweep->values}, {"users", c.sweep->users}};
  j["horizon"] = c.horizon;
  j["warmup_fraction"] = c.warmup_fraction;
  j["seeds"] = c.seeds;
  if (!c.initial_backlog.empty()) j["initial_backlog"] = c.initial_backlog;
  if (c.qos) j["frame"] = qos_to_json(*c.qos);
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  const json j = read_json(path);
  try {
    return config_from_json(j, path.parent_path());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names{"fig1", "fig2", "fig3", "example3a"};
  return names;
}

ExperimentConfig preset(const std::string& name, bool full) {
  ExperimentConfig c;
  c.id = name;
  const EstimatorSpec sum{EstimatorKind::Sum, {}};
  auto all_users = [](std::size_t n) {
    std::vector<std::size_t> u(n);
    std::iota(u.begin(), u.end(), std::size_t{0});
    return u;
  };
  if (name == "fig1" || name == "fig2") {
    const bool on_off = name == "fig1";
    const std::size_t n = 10;
    c.model = on_off ? make_symmetric_model(n, 6, StateSpace({0, 1}), {0.5, 0.5}, sum)
                     : make_symmetric_model(n, 6, StateSpace({0, 1, 2, 3}), {0.25, 0.25, 0.25, 0.25}, sum);
    const Rounding r = on_off ? Rounding::Floor : Rounding::Ceil;
    c.policies = {{PolicyKind::Mw, Rounding::Floor, ""},
                  {PolicyKind::Imw, Rounding::Floor, ""},
                  {PolicyKind::NaiveMw, r, ""},
                  {PolicyKind::NaiveImw, r, ""}};
    std::vector<double> values;
    if (on_off) {
      values = {0.01};
      for (double v : sweep_values_from(0.05, 0.05, 0.5)) values.push_back(v);
    } else {
      values = sweep_values_from(0.05, 0.05, 1.0);
    }
    c.arrivals.assign(n, ArrivalSpec::binomial(10, values.front()));
    c.sweep = SweepSpec{values, all_users(n)};
    c.horizon = full ? (on_off ? 1'000'000 : 10'000'000) : 100'000;
  } else if (name == "fig3") {
    const std::size_t n = 15;
    c.model = make_symmetric_model(n, 6, StateSpace({0, 1, 2, 3}), {0.25, 0.25, 0.25, 0.25}, sum);
    c.policies = {{PolicyKind::Qmw, Rounding::Floor, ""}};
    QosSetup qos;
    qos.frame_length = 10;
    qos.classes.assign(n, TrafficClass::BestEffort);
    qos.alpha.assign(n, 0.0);
    qos.beta.assign(n, 0.0);
    qos.classes[0] = qos.classes[1] = TrafficClass::RealTime;
    qos.alpha[0] = 0.01;
    qos.alpha[1] = 0.02;
    const double beta[] = {5.0, 2.0, 1.0};
    for (std::size_t g = 0; g < 3; ++g) {
      qos.classes[2 + g] = TrafficClass::RateGuaranteed;
      qos.beta[2 + g] = beta[g];
    }
    c.qos = qos;
    std::vector<double> values{0.18, 0.5};
    for (int v = 1; v <= 10; ++v) values.push_back(v);
    c.arrivals = {ArrivalSpec::binomial(10, 2.75), ArrivalSpec::binomial(10, 2.75)};
    for (double b : beta) c.arrivals.push_back(ArrivalSpec::binomial(10, b));
    std::vector<std::size_t> be;
    for (std::size_t i = 5; i < n; ++i) {
      c.arrivals.push_back(ArrivalSpec::binomial(10, values.front()));
      be.push_back(i);
    }
    c.sweep = SweepSpec{values, be};
    c.horizon = full ? 5'000'000 : 500'000;
  } else if (name == "example3a") {
    StateSpace states({0, 2, 6});
    UserChannelModel user(states, {{0.5, 0.5, 0.0}, {0.5, 0.0, 0.5}}, {EstimatorKind::AvgFloor, {}});
    c.model = SystemModel{states, 2, {EstimatorKind::AvgFloor, {}}, {user}};
    c.policies = {{PolicyKind::Mw, Rounding::Floor, ""}, {PolicyKind::NaiveMw, Rounding::Floor, ""}};
    c.arrivals = {ArrivalSpec::bernoulli(0.5)};
    c.horizon = full ? 1'000'000 : 100'000;
  } else {
    fail(ErrorKind::UnknownPreset, "unknown preset '" + name + "'");
  }
  c.validate();
  return c;
}

std::size_t sweep_points(const ExperimentConfig& config) {
  return config.sweep ? config.sweep->values.size() : 1;
}

std::vector<ArrivalSpec> arrivals_at(const ExperimentConfig& config, std::size_t sweep_index) {
  std::vector<ArrivalSpec> out = config.arrivals;
  if (!config.sweep) return out;
  const double v = config.sweep->values.at(sweep_index);
  for (std::size_t u : config.sweep->users) out[u] = out[u].with_mean(v);
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, std::size_t jobs) {
  config.validate();
  auto model = std::make_shared<const SystemModel>(config.model);
  auto stats = std::make_shared<const std::vector<ConditionalStats>>(derive_all_stats(config.model));
  const std::size_t points = sweep_points(config);
  const std::size_t n_policies = config.policies.size();
  const std::size_t n_seeds = config.seeds.size();

  std::vector<RunConfig> tasks;
  std::vector<SweepRow> rows;
  for (std::size_t k = 0; k < points; ++k) {
    const auto arrivals = arrivals_at(config, k);
    std::vector<double> lambda;
    for (std::size_t i = 0; i < arrivals.size(); ++i) lambda.push_back(per_slot_rate(config, i, arrivals[i]));
    const double label = config.sweep ? config.sweep->values[k]
                                      : std::accumulate(lambda.begin(), lambda.end(), 0.0) /
                                            static_cast<double>(lambda.size());
    std::optional<StatWeights> lp_gamma;
    for (std::size_t p = 0; p < n_policies; ++p) {
      const PolicySpec& spec = config.policies[p];
      std::optional<StatWeights> gamma;
      if (spec.kind == PolicyKind::Stat) {
        gamma = load_gamma(spec);
        if (!gamma) {
          if (!lp_gamma) lp_gamma = membership(lambda, *stats).gamma;
          gamma = lp_gamma;
        }
      }
      for (std::size_t s = 0; s < n_seeds; ++s) {
        RunConfig rc;
        rc.model = model;
        rc.stats = stats;
        rc.policy = spec;
        rc.gamma = gamma;
        rc.arrivals = arrivals;
        rc.qos = config.qos;
        rc.horizon = config.horizon;
        rc.warmup_fraction = config.warmup_fraction;
        rc.seed = config.seeds[s];
        rc.stream = k * n_policies + p;
        rc.initial_backlog = config.initial_backlog;
        tasks.push_back(std::move(rc));
        rows.push_back({k, label, p, config.seeds[s], {}});
      }
    }
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= tasks.size()) return;
      try {
        rows[idx].metrics = run(tasks[idx]);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(tasks.size());
        return;
      }
    }
  };
  jobs = std::clamp<std::size_t>(jobs, 1, std::max<std::size_t>(1, tasks.size()));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
  return rows;
}

void write_csv(std::ostream& out, const ExperimentConfig& config, const std::vector<SweepRow>& rows) {
  const std::size_t n = config.users();
  std::vector<std::size_t> rt, rg;
  if (config.qos) {
    for (std::size_t i = 0; i < n; ++i) {
      if (config.qos->classes[i] == TrafficClass::RealTime) rt.push_back(i);
      if (config.qos->classes[i] == TrafficClass::RateGuaranteed) rg.push_back(i);
    }
  }
  out << "config_id,policy,lambda,seed,horizon,mean_total_backlog";
  for (std::size_t i = 0; i < n; ++i) out << ",backlog_" << i;
  for (std::size_t i = 0; i < n; ++i) out << ",throughput_" << i;
  out << ",little_delay";
  for (std::size_t i : rt) out << ",rt_drop_" << i;
  for (std::size_t i : rg) out << ",rg_rate_" << i;
  out << ",divergent\n";
  for (const auto& row : rows) {
    const MetricsLog& m = row.metrics;
    out << config.id << ',' << config.policies[row.policy_index].label() << ',' << format_number(row.lambda)
        << ',' << row.seed << ',' << m.horizon << ',' << format_number(m.mean_total_backlog);
    for (double v : m.per_user_backlog) out << ',' << format_number(v);
    for (double v : m.per_user_throughput) out << ',' << format_number(v);
    const double delay = m.aggregate_arrival_rate > 0.0 ? little_delay(m) : std::nan("");
    out << ',' << format_number(delay);
    for (std::size_t i : rt) out << ',' << format_number(m.rt_drop_ratio[i]);
    for (std::size_t i : rg) out << ',' << format_number(m.rg_rate[i]);
    out << ',' << (m.divergent ? 1 : 0) << '\n';
  }
}

json analyze(const ExperimentConfig& config, const std::optional<std::vector<double>>& lambda_override) {
  config.validate();
  const std::size_t n = config.users();
  std::vector<ArrivalSpec> arrivals = arrivals_at(config, 0);
  // rates the configured arrival laws cannot produce still get a verdict
  bool laws_fit = true;
  if (lambda_override) {
    if (lambda_override->size() != n) fail(ErrorKind::Validation, "--lambda needs one value per user");
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite((*lambda_override)[i]) || (*lambda_override)[i] < 0.0) {
        fail(ErrorKind::Validation, "--lambda values must be finite and >= 0");
      }
      arrivals[i] = arrivals[i].with_mean((*lambda_override)[i]);
      try {
        arrivals[i].validate();
      } catch (const Error&) {
        laws_fit = false;
      }
    }
  }
  const auto stats = derive_all_stats(config.model);
  std::vector<double> lambda;
  for (std::size_t i = 0; i < n; ++i) lambda.push_back(per_slot_rate(config, i, arrivals[i]));

  const RegionCertificate cert = membership(lambda, stats);
  std::vector<double> direction = lambda;
  if (std::all_of(direction.begin(), direction.end(), [](double v) { return v == 0.0; })) {
    direction.assign(n, 1.0);
  }
  const double theta = boundary_scale(direction, stats);

  json report = certificate_to_json(cert);
  report["id"] = config.id;
  report["lambda"] = lambda;
  report["theta_star"] = theta;
  report["theta_direction"] = direction;
  report["lp_method"] = cert.method == LpMethod::Product ? "product" : "column";

  json constants;
  double mu = std::numeric_limits<double>::infinity();
  for (const auto& st : stats) mu = std::min(mu, st.mean_vertex_rate());
  constants["mu"] = mu;
  report["delay_bound"] = nullptr;
  if (!laws_fit) {
    constants["B"] = nullptr;
    constants["K"] = nullptr;
    constants["rho"] = cert.verdict == Verdict::Inside ? json(1.0 / theta) : json(nullptr);
    report["constants"] = constants;
    report["delay_bound_note"] = "the configured arrival laws cannot have these means";
    return report;
  }
  constants["B"] = drift_constant(arrivals, config.model.channels, config.model.states.x_max());
  const bool positive_moments = std::all_of(arrivals.begin(), arrivals.end(),
                                            [](const ArrivalSpec& a) { return a.second_moment() > 0.0; });
  if (positive_moments) {
    constants["K"] = service_constant(config.model.channels, config.model.states.x_max(), arrivals);
  } else {
    constants["K"] = nullptr;
  }
  constants["rho"] = cert.verdict == Verdict::Inside ? json(1.0 / theta) : json(nullptr);
  if (config.qos) {
    report["delay_bound_note"] = "the delay bound covers slot mode only";
  } else if (cert.verdict != Verdict::Inside) {
    report["delay_bound_note"] = "rates are not strictly inside the region";
  } else if (!positive_moments) {
    report["delay_bound_note"] = "every user needs E[A^2] > 0";
  } else {
    const DelayBound db = delay_bound(arrivals, stats);
    report["delay_bound"] = db.bound;
    constants["rho"] = db.inputs.rho;
    constants["mu"] = db.inputs.mu;
    constants["K"] = db.inputs.k;
  }
  report["constants"] = constants;
  return report;
}

}  // namespace fadesched
