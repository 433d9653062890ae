#include "collapse/cli.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numbers>

#include "CLI11.hpp"
#include "json.hpp"

#include "collapse/diagnostics.hpp"
#include "collapse/report_io.hpp"

namespace collapse::cli {

namespace {

using json = nlohmann::json;

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  const auto last = s.find_last_not_of(" \t");
  if (first == std::string::npos) return {};
  return s.substr(first, last - first + 1);
}

double parse_number(const std::string& text, const std::string& token, const std::string& field) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ConfigError(field + ": cannot parse '" + token + "' as a number");
  }
  return value;
}

}  // namespace

double parse_scalar(const std::string& token, const std::string& field) {
  std::string text = trim(token);
  double sign = 1.0;
  if (!text.empty() && (text[0] == '-' || text[0] == '+')) {
    if (text.find("pi") != std::string::npos) {
      sign = text[0] == '-' ? -1.0 : 1.0;
      text = text.substr(1);
    }
  }
  const auto pi_pos = text.find("pi");
  if (pi_pos == std::string::npos) return parse_number(text, token, field);

  double factor = 1.0;
  std::string head = text.substr(0, pi_pos);
  if (!head.empty()) {
    if (head.back() != '*') throw ConfigError(field + ": cannot parse '" + token + "'");
    head.pop_back();
    factor = parse_number(head, token, field);
  }
  std::string tail = text.substr(pi_pos + 2);
  double divisor = 1.0;
  if (!tail.empty()) {
    if (tail.front() != '/') throw ConfigError(field + ": cannot parse '" + token + "'");
    divisor = parse_number(tail.substr(1), token, field);
  }
  return sign * factor * std::numbers::pi / divisor;
}

double mean_collapse_time(const EnsembleReport& report) {
  double weighted = 0.0;
  std::int64_t total = 0;
  for (Index k = 0; k < report.n_states; ++k) {
    if (report.counts[k] == 0) continue;
    weighted += report.collapse_time_mean[k] * static_cast<double>(report.counts[k]);
    total += report.counts[k];
  }
  return total == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : weighted / static_cast<double>(total);
}

double analytic_collapse_time(const EnsembleReport& report) {
  const Index n = report.n_states;
  // Oracle-weighted predicted time per collapse target.
  Eigen::VectorXd time_sum = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd weight_sum = Eigen::VectorXd::Zero(n);
  const double rate_scale =
      report.params.rate_convention == RateConvention::OdeConsistent ? 1.0 : 0.5;

  auto visit = [&](const SignVector& signs, double weight) {
    const AlphaVector alpha(signs);
    const Eigen::VectorXd rates =
        reduction_rates(alpha, coupling_vector<double>(alpha), report.params.g);
    const OutcomeClass outcome = asymptotic_outcome(rates);
    if (!outcome.is_collapse()) return;
    const Eigen::VectorXd scaled = rate_scale * rates;
    time_sum[outcome.index()] +=
        weight * predicted_collapse_time(report.x0, scaled, report.cfg.epsilon);
    weight_sum[outcome.index()] += weight;
  };

  if (report.sampler.mode == PhaseMode::Common) {
    visit(SignVector::Constant(n, 1), 0.5);
    visit(SignVector::Constant(n, -1), 0.5);
  } else {
    if (n > kMaxOracleStates) throw DimensionTooLarge("analytic_collapse_time: N too large");
    SignVector signs(n);
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
      for (Index i = 0; i < n; ++i) signs[i] = (mask >> i) & 1U ? -1 : 1;
      visit(signs, 1.0);
    }
  }

  double weighted = 0.0;
  std::int64_t total = 0;
  for (Index k = 0; k < n; ++k) {
    if (report.counts[k] == 0 || weight_sum[k] == 0.0) continue;
    weighted += (time_sum[k] / weight_sum[k]) * static_cast<double>(report.counts[k]);
    total += report.counts[k];
  }
  return total == 0 ? std::numeric_limits<double>::quiet_NaN()
                    : weighted / static_cast<double>(total);
}

namespace {

std::ofstream open_output(const std::string& path) {
  if (path.empty()) throw ConfigError("missing required field: out");
  std::ofstream file(path);
  if (!file) throw ConfigError("out: cannot open '" + path + "' for writing");
  return file;
}

void require_x0(const RunConfig& config) {
  if (config.x0.size() == 0) throw ConfigError("missing required field: x0");
}

}  // namespace

int cmd_trajectory(const RunConfig& config, std::ostream& out) {
  require_x0(config);
  if (config.theta0.has_value() == config.sampler.has_value()) {
    throw ConfigError("trajectory: supply exactly one of theta0 or seed");
  }
  StateVector initial;
  initial.x = config.x0;
  initial.theta = config.theta0 ? *config.theta0
                                 : sample_phases(*config.sampler, config.n_states(), 0).theta;
  validate(initial);
  validate(config.params, config.n_states());
  std::ofstream file = open_output(config.out);

  IntegratorConfig cfg = config.cfg;
  cfg.stop_on_outcome = config.stop_at_collapse;
  const Trajectory traj = integrate(config.law, initial, config.params, cfg);
  write_trajectory_csv(file, traj);
  if (!file) throw Error("out: write failed for '" + config.out + "'");

  out << "outcome: " << traj.outcome.label() << '\n';
  out << "collapse_time: " << (traj.collapse_time ? format_double(*traj.collapse_time) : "none")
      << '\n';
  return kExitOk;
}

int cmd_ensemble(const RunConfig& config, std::ostream& out) {
  require_x0(config);
  if (!config.sampler) throw ConfigError("missing required field: seed");
  if (config.theta0) throw ConfigError("ensemble: theta0 is sampled and cannot be given");
  if (config.runs < 1) throw ConfigError("runs: must be at least 1");
  std::ofstream file = open_output(config.out);

  const EnsembleReport report = run_ensemble(config.runs, config.x0, config.params, config.cfg,
                                             *config.sampler, {config.threads});
  file << report_to_json(report).dump(2) << '\n';
  if (!file) throw Error("out: write failed for '" + config.out + "'");

  for (Index s = 0; s < slot_count(report.n_states); ++s) {
    out << slot_outcome(s, report.n_states).label() << ": " << report.counts[s] << '\n';
  }
  return kExitOk;
}

int cmd_sweep(const RunConfig& config, std::ostream& out) {
  require_x0(config);
  if (!config.sampler) throw ConfigError("missing required field: seed");
  if (config.theta0) throw ConfigError("sweep: theta0 is sampled and cannot be given");
  if (config.sweep_g.empty() || config.sweep_epsilon.empty()) {
    throw ConfigError("sweep: the g and epsilon grids must both be nonempty");
  }
  if (config.runs < 1) throw ConfigError("runs: must be at least 1");
  for (double g : config.sweep_g) {
    if (!(g > 0.0)) throw ConfigError("sweep-g: values must be positive");
  }
  std::ofstream file = open_output(config.out);

  file << "g,epsilon,tau_mean,tau_analytic\n";
  for (double g : config.sweep_g) {
    ModelParams params = config.params;
    params.g = g;
    for (double eps : config.sweep_epsilon) {
      IntegratorConfig cfg = config.cfg;
      const IntegratorConfig defaults = IntegratorConfig::defaults_for(g);
      if (!config.dt_explicit) cfg.dt = defaults.dt;
      if (!config.t_max_explicit) cfg.t_max = defaults.t_max;
      cfg.epsilon = eps;
      const EnsembleReport report =
          run_ensemble(config.runs, config.x0, params, cfg, *config.sampler, {config.threads});
      file << format_double(g) << ',' << format_double(eps) << ','
           << format_double(mean_collapse_time(report)) << ','
           << format_double(analytic_collapse_time(report)) << '\n';
    }
  }
  if (!file) throw Error("out: write failed for '" + config.out + "'");
  out << "rows: " << config.sweep_g.size() * config.sweep_epsilon.size() << '\n';
  return kExitOk;
}

int cmd_verify(std::ostream& out) {
  const std::vector<VerifyCheck> checks = run_verification_suite();
  bool all_passed = true;
  for (const VerifyCheck& c : checks) {
    all_passed = all_passed && c.passed;
    out << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << format_double(c.value) << ' '
        << c.comparison << ' ' << format_double(c.threshold);
    if (c.expected_mismatch) out << "  (expected mismatch (documented))";
    out << '\n';
  }
  out << checks.size() << " checks, " << (all_passed ? "all passed" : "FAILURES") << '\n';
  return all_passed ? kExitOk : kExitVerifyFailed;
}

namespace {

struct Flags {
  int states = 0;
  std::vector<std::string> x0, theta0, omega, h_matrix, sweep_g, sweep_epsilon;
  double g = 1.0, dt = 0.0, t_max = 0.0, epsilon = 0.0;
  std::int64_t sample_stride = 0;
  std::uint64_t seed = 0;
  std::string phase_mode, law, rate_convention, out, config;
  std::int64_t runs = 0;
  unsigned threads = 0;
  bool frozen_phase = false;
  bool stop_at_collapse = false;
};

void add_shared_flags(CLI::App* sub, Flags& f, bool with_sweep) {
  sub->add_option("--states", f.states, "Number of states N (defaults to the length of x0)");
  sub->add_option("--x0", f.x0, "Initial probabilities")->delimiter(',');
  sub->add_option("--theta0", f.theta0, "Initial phases (accepts pi, -pi/2, 3*pi/4)")->delimiter(',');
  sub->add_option("--omega", f.omega, "Eigenfrequencies")->delimiter(',');
  sub->add_option("--h-matrix", f.h_matrix, "Interaction matrix, row-major")->delimiter(',');
  sub->add_option("--g", f.g, "Reduction strength");
  sub->add_option("--dt", f.dt, "Time step (default 1e-3/g)");
  sub->add_option("--t-max", f.t_max, "Horizon (default 50/g)");
  sub->add_option("--epsilon", f.epsilon, "Collapse threshold (default 1e-3)");
  sub->add_option("--sample-stride", f.sample_stride, "Record every k-th step (default 10)");
  sub->add_option("--seed", f.seed, "Phase sampler seed");
  sub->add_option("--phase-mode", f.phase_mode, "independent or common")
      ->check(CLI::IsMember({"independent", "common"}));
  sub->add_option("--law", f.law, "reduction or full")->check(CLI::IsMember({"reduction", "full"}));
  sub->add_flag("--frozen-phase", f.frozen_phase, "Hold phases fixed under the full law");
  sub->add_option("--rate-convention", f.rate_convention, "as-printed or ode-consistent")
      ->check(CLI::IsMember({"as-printed", "ode-consistent"}));
  sub->add_option("--runs", f.runs, "Ensemble size (default 1000)");
  sub->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  sub->add_option("--out", f.out, "Output path");
  sub->add_option("--config", f.config, "JSON config file; flags override it");
  if (!with_sweep) {
    sub->add_flag("--stop-at-collapse", f.stop_at_collapse,
                  "trajectory: end the run at the first detected outcome instead of t_max");
  }
  if (with_sweep) {
    sub->add_option("--sweep-g", f.sweep_g, "Grid of g values")->delimiter(',');
    sub->add_option("--sweep-epsilon", f.sweep_epsilon, "Grid of epsilon values")->delimiter(',');
  }
}

class Merger {
 public:
  Merger(const CLI::App* sub, json file) : sub_(sub), file_(std::move(file)) {}

  bool flag_given(const std::string& flag) const {
    try {
      return sub_->count(flag) > 0;
    } catch (const CLI::OptionNotFound&) {
      return false;
    }
  }

  const json* file_value(const std::string& key) const {
    const auto it = file_.find(key);
    return it == file_.end() ? nullptr : &*it;
  }

  std::optional<Eigen::VectorXd> list(const std::string& flag, const std::string& key,
                                      const std::vector<std::string>& tokens) const {
    std::vector<double> values;
    if (flag_given(flag)) {
      for (const std::string& t : tokens) values.push_back(parse_scalar(t, key));
    } else if (const json* v = file_value(key)) {
      if (!v->is_array()) throw ConfigError(key + ": expected an array in the config file");
      for (const json& e : *v) values.push_back(scalar_from_json(e, key));
    } else {
      return std::nullopt;
    }
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Index>(values.size()));
  }

  template <typename T>
  std::optional<T> scalar(const std::string& flag, const std::string& key, const T& flag_value) const {
    if (flag_given(flag)) return flag_value;
    if (const json* v = file_value(key)) {
      try {
        return v->get<T>();
      } catch (const json::exception&) {
        throw ConfigError(key + ": wrong type in the config file");
      }
    }
    return std::nullopt;
  }

 private:
  static double scalar_from_json(const json& e, const std::string& key) {
    if (e.is_number()) return e.get<double>();
    if (e.is_string()) return parse_scalar(e.get<std::string>(), key);
    throw ConfigError(key + ": array entries must be numbers or strings");
  }

  const CLI::App* sub_;
  json file_;
};

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  try {
    json doc = json::parse(in);
    if (!doc.is_object()) throw ConfigError("config: top level must be an object");
    return doc;
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig resolve(const CLI::App* sub, const Flags& f) {
  const Merger m(sub, load_config_file(f.config));
  RunConfig config;

  if (auto x0 = m.list("--x0", "x0", f.x0)) config.x0 = *x0;
  require_x0(config);
  const auto states = m.scalar<int>("--states", "states", f.states);
  if (states) {
    if (*states < 2) throw ConfigError("states: must be at least 2");
    if (config.x0.size() != 0 && config.x0.size() != *states) {
      throw ConfigError("x0: expected " + std::to_string(*states) + " entries");
    }
  }
  const Index n = config.x0.size();

  config.theta0 = m.list("--theta0", "theta0", f.theta0);
  if (config.theta0 && config.theta0->size() != n) {
    throw ConfigError("theta0: expected " + std::to_string(n) + " entries");
  }

  config.params = ModelParams::zeros(n);
  if (auto omega = m.list("--omega", "omega", f.omega)) {
    if (omega->size() != n) throw ConfigError("omega: expected " + std::to_string(n) + " entries");
    config.params.omega = *omega;
  }
  if (auto h = m.list("--h-matrix", "h_matrix", f.h_matrix)) {
    if (h->size() != n * n) {
      throw ConfigError("h-matrix: expected " + std::to_string(n * n) + " entries (row-major)");
    }
    for (Index r = 0; r < n; ++r) {
      for (Index c = 0; c < n; ++c) config.params.h_matrix(r, c) = (*h)[r * n + c];
    }
  }
  config.params.g = m.scalar<double>("--g", "g", f.g).value_or(1.0);
  if (!(config.params.g > 0.0)) throw ConfigError("g: must be positive");
  config.params.frozen_phase = m.scalar<bool>("--frozen-phase", "frozen_phase", f.frozen_phase).value_or(false);

  const std::string convention =
      m.scalar<std::string>("--rate-convention", "rate_convention", f.rate_convention)
          .value_or("ode-consistent");
  if (convention == "ode-consistent") {
    config.params.rate_convention = RateConvention::OdeConsistent;
  } else if (convention == "as-printed") {
    config.params.rate_convention = RateConvention::AsPrinted;
  } else {
    throw ConfigError("rate_convention: expected as-printed or ode-consistent");
  }

  const std::string mode =
      m.scalar<std::string>("--phase-mode", "phase_mode", f.phase_mode).value_or("independent");
  if (mode != "independent" && mode != "common") {
    throw ConfigError("phase_mode: expected independent or common");
  }
  config.params.phase_mode = mode == "common" ? PhaseMode::Common : PhaseMode::Independent;

  const std::string law = m.scalar<std::string>("--law", "law", f.law).value_or("reduction");
  if (law != "reduction" && law != "full") throw ConfigError("law: expected reduction or full");
  config.law = law == "full" ? Law::Full : Law::Reduction;

  if (auto seed = m.scalar<std::uint64_t>("--seed", "seed", f.seed)) {
    config.sampler = PhaseSampler{config.params.phase_mode, PhaseDistribution::UniformCircle, *seed};
  }

  config.cfg = IntegratorConfig::defaults_for(config.params.g);
  if (auto dt = m.scalar<double>("--dt", "dt", f.dt)) {
    config.cfg.dt = *dt;
    config.dt_explicit = true;
  }
  if (auto t_max = m.scalar<double>("--t-max", "t_max", f.t_max)) {
    config.cfg.t_max = *t_max;
    config.t_max_explicit = true;
  }
  if (auto eps = m.scalar<double>("--epsilon", "epsilon", f.epsilon)) config.cfg.epsilon = *eps;
  if (auto stride = m.scalar<std::int64_t>("--sample-stride", "sample_stride", f.sample_stride)) {
    config.cfg.sample_stride = *stride;
  }
  config.cfg.validate();

  config.runs = m.scalar<std::int64_t>("--runs", "runs", f.runs).value_or(1000);
  config.threads = m.scalar<unsigned>("--threads", "threads", f.threads).value_or(0U);
  config.out = m.scalar<std::string>("--out", "out", f.out).value_or("");
  config.stop_at_collapse =
      m.scalar<bool>("--stop-at-collapse", "stop_at_collapse", f.stop_at_collapse).value_or(false);

  auto grid = [&](const std::string& flag, const std::string& key,
                  const std::vector<std::string>& tokens) {
    std::vector<double> values;
    if (auto v = m.list(flag, key, tokens)) values.assign(v->data(), v->data() + v->size());
    return values;
  };
  config.sweep_g = grid("--sweep-g", "sweep_g", f.sweep_g);
  config.sweep_epsilon = grid("--sweep-epsilon", "sweep_epsilon", f.sweep_epsilon);
  return config;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Phase-driven state-vector reduction simulator"};
  app.require_subcommand(1);
  Flags flags;
  CLI::App* trajectory = app.add_subcommand("trajectory", "Integrate one trajectory to CSV");
  CLI::App* ensemble = app.add_subcommand("ensemble", "Monte Carlo ensemble to a JSON report");
  CLI::App* sweep = app.add_subcommand("sweep", "Reduction time over a (g, epsilon) grid to CSV");
  app.add_subcommand("verify", "Run the diagnostics suite");
  add_shared_flags(trajectory, flags, false);
  add_shared_flags(ensemble, flags, false);
  add_shared_flags(sweep, flags, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    if (sub->get_name() == "verify") return cmd_verify(out);
    const RunConfig config = resolve(sub, flags);
    if (sub == trajectory) return cmd_trajectory(config, out);
    if (sub == ensemble) return cmd_ensemble(config, out);
    return cmd_sweep(config, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const WrongDimension& e) {
    err << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("collapse_cli");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace collapse::cli
