#include "collapse/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "collapse/ensemble.hpp"

namespace collapse {

namespace {

/// Integrate x' = rate x (1 - x^2) for one component and track the max
/// deviation from closed_form_x under `convention`.
double max_deviation(double x0, double g, int f_alpha, double ode_rate,
                     RateConvention convention, double dt) {
  if (!(x0 > 0.0 && x0 < 1.0)) throw DegenerateInitial("verify_closed_form: x0 must lie in (0, 1)");
  if (!(g > 0.0)) throw ConfigError("verify_closed_form: g must be positive");
  if (!(dt > 0.0)) throw ConfigError("verify_closed_form: dt must be positive");

  const double horizon = 10.0 / g;
  const auto steps = static_cast<std::int64_t>(std::llround(horizon / dt));
  ReductionField<double> field{Eigen::VectorXd::Constant(1, ode_rate)};
  StateVector state{Eigen::VectorXd::Constant(1, x0), Eigen::VectorXd::Zero(1)};
  Rk4Stepper<double> stepper;
  const double f = static_cast<double>(f_alpha);

  double worst = 0.0;
  for (std::int64_t i = 1; i <= steps; ++i) {
    stepper.step(field, state, dt);
    const double t = static_cast<double>(i) * dt;
    worst = std::max(worst, std::abs(state.x[0] - closed_form_x(t, x0, f, 1, g, convention)));
  }
  return worst;
}

}  // namespace

double verify_closed_form(double x0, double g, int f_alpha, RateConvention convention, double dt) {
  const double full_rate = g * f_alpha;
  const double ode_rate = convention == RateConvention::OdeConsistent ? full_rate : 0.5 * full_rate;
  return max_deviation(x0, g, f_alpha, ode_rate, convention, dt);
}

double closed_form_rate_mismatch(double x0, double g, int f_alpha, double dt) {
  return max_deviation(x0, g, f_alpha, g * f_alpha, RateConvention::AsPrinted, dt);
}

double convention_gap(double x0, double g, int f_alpha, double t) {
  const double f = static_cast<double>(f_alpha);
  return closed_form_x(t, x0, f, 1, g, RateConvention::OdeConsistent) -
         closed_form_x(t, x0, f, 1, g, RateConvention::AsPrinted);
}

Trajectory frozen_phase_baseline(const StateVector& initial, const ModelParams& params,
                                 const IntegratorConfig& cfg) {
  ModelParams frozen = params;
  frozen.frozen_phase = true;
  return integrate(Law::Full, initial, frozen, cfg);
}

double norm_drift_scan(const Trajectory& trajectory) {
  if (trajectory.norm_series.empty()) return 0.0;
  const double first = trajectory.norm_series.front();
  double worst = 0.0;
  for (double v : trajectory.norm_series) worst = std::max(worst, std::abs(v - first));
  return worst;
}

double reduction_global_error(const Eigen::VectorXd& x0, const AlphaVector& alpha, double g,
                              double dt, double horizon) {
  if (x0.size() != alpha.size()) throw WrongDimension("reduction_global_error: size mismatch");
  const double ratio = horizon / dt;
  const auto steps = static_cast<std::int64_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(steps)) > 1e-9) {
    throw ConfigError("reduction_global_error: horizon must be a multiple of dt");
  }
  const Eigen::VectorXd f = coupling_vector<double>(alpha);
  ReductionField<double> field{reduction_rates(alpha, f, g)};
  StateVector state{x0, Eigen::VectorXd::Zero(x0.size())};
  Rk4Stepper<double> stepper;
  for (std::int64_t i = 0; i < steps; ++i) stepper.step(field, state, dt);

  double worst = 0.0;
  for (Index n = 0; n < x0.size(); ++n) {
    const double exact =
        closed_form_x(horizon, x0[n], f[n], alpha[n], g, RateConvention::OdeConsistent);
    worst = std::max(worst, std::abs(state.x[n] - exact));
  }
  return worst;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("log_log_slope: need >= 2 points");
  const auto n = static_cast<Index>(x.size());
  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd rhs(n);
  for (Index i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design(i, 1) = std::log(x[static_cast<std::size_t>(i)]);
    rhs[i] = std::log(y[static_cast<std::size_t>(i)]);
  }
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(rhs);
  return coef[1];
}

ConvergenceFit measure_convergence(const Eigen::VectorXd& x0, const AlphaVector& alpha, double g,
                                   const std::vector<double>& step_sizes, double horizon) {
  ConvergenceFit fit;
  fit.step_sizes = step_sizes;
  for (double dt : step_sizes) fit.errors.push_back(reduction_global_error(x0, alpha, g, dt, horizon));
  fit.slope = log_log_slope(fit.step_sizes, fit.errors);
  return fit;
}

Eigen::MatrixXd random_symmetric(Index n, std::uint64_t seed) {
  std::mt19937_64 engine = run_engine(seed, 0);
  Eigen::MatrixXd h(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j) {
      const double v = 2.0 * unit_uniform(engine) - 1.0;
      h(i, j) = v;
      h(j, i) = v;
    }
  }
  return h;
}

namespace {

VerifyCheck at_most(std::string name, double value, double threshold) {
  return {std::move(name), value, threshold, value <= threshold, false, "<="};
}

VerifyCheck mismatch(std::string name, double value, double threshold) {
  return {std::move(name), value, threshold, value > threshold, true, ">"};
}

/// Frequencies spread out so the phase differences keep rotating.
// Spacing 3 keeps phase differences rotating faster than |H| <= 1 can pump
// probability, so no component reaches x = 0 where the polar form is singular.
Eigen::VectorXd spread_frequencies(Index n) {
  Eigen::VectorXd omega(n);
  for (Index i = 0; i < n; ++i) omega[i] = 3.0 * static_cast<double>(i) + 0.25;
  return omega;
}

}  // namespace

std::vector<VerifyCheck> run_verification_suite() {
  std::vector<VerifyCheck> checks;
  const double x0_grid[] = {0.1, 0.3, 0.5, 0.7, 0.9};
  const double g_grid[] = {0.5, 1.0, 2.0};

  {
    double worst = 0.0;
    double worst_half = 0.0;
    for (double x0 : x0_grid) {
      for (double g : g_grid) {
        for (int fa : {1, -1}) {
          worst = std::max(worst, verify_closed_form(x0, g, fa, RateConvention::OdeConsistent, 1e-4));
          worst_half = std::max(worst_half, verify_closed_form(x0, g, fa, RateConvention::AsPrinted, 1e-4));
        }
      }
    }
    checks.push_back(at_most("closed form (ode-consistent) vs RK4", worst, 1e-8));
    checks.push_back(at_most("closed form (as-printed) vs half-rate RK4", worst_half, 1e-8));
  }

  {
    checks.push_back(mismatch("closed form (as-printed) vs full-rate RK4, x0 = 0.5",
                              closed_form_rate_mismatch(0.5, 1.0, 1, 1e-4), 0.05));
  }

  {
    double gap = 0.0;
    for (double x0 : x0_grid) gap = std::max(gap, std::abs(convention_gap(x0, 1.0, 1, 0.0)));
    checks.push_back(at_most("conventions agree at t = 0", gap, 0.0));
  }

  {
    // alpha -> f alpha for N = 2
    const int table[4][4] = {{1, -1, 1, -1}, {-1, 1, -1, 1}, {1, 1, -1, -1}, {-1, -1, 1, 1}};
    int wrong = 0;
    for (const auto& row : table) {
      SignVector signs(2);
      signs << row[0], row[1];
      const AlphaVector alpha(signs);
      for (Index n = 0; n < 2; ++n) {
        if (coupling_f_int(n, alpha) * alpha[n] != row[2 + n]) ++wrong;
      }
    }
    checks.push_back(at_most("two-state coupling sign table mismatches", wrong, 0.0));
  }

  {
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_max = 20.0;
    cfg.sample_stride = 1;
    double drift = 0.0;
    for (Index n : {Index{2}, Index{4}}) {
      for (std::uint64_t seed : {11U, 12U, 13U}) {
        ModelParams params = ModelParams::zeros(n);
        params.h_matrix = random_symmetric(n, seed);
        params.omega = spread_frequencies(n);
        const StateVector initial{Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n)),
                                  Eigen::VectorXd::LinSpaced(n, 0.3, 2.1)};
        const Trajectory traj = integrate(Law::Full, initial, params, cfg);
        for (double norm : traj.norm_series) drift = std::max(drift, std::abs(norm - 1.0));
      }
    }
    checks.push_back(at_most("norm drift, full law, symmetric H", drift, 1e-6));
  }

  {
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_max = 20.0;
    cfg.sample_stride = 1;
    const Index n = 4;
    ModelParams params = ModelParams::zeros(n);
    params.omega << 1.0, -2.5, 0.75, 3.0;
    const StateVector initial{Eigen::VectorXd::Constant(n, 0.25),
                              Eigen::VectorXd::LinSpaced(n, 0.1, 1.3)};
    const Trajectory traj = integrate(Law::Full, initial, params, cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < traj.size(); ++i) {
      const Eigen::VectorXd exact = initial.theta - params.omega * traj.times[i];
      err = std::max(err, (traj.states[i].theta - exact).cwiseAbs().maxCoeff());
    }
    checks.push_back(at_most("free evolution phase error", err, 1e-8));
  }

  {
    IntegratorConfig cfg;
    cfg.dt = 1e-3;
    cfg.t_max = 5.0;
    cfg.sample_stride = 1;
    ModelParams params = ModelParams::zeros(2);
    params.h_matrix << 0.0, 1.0, 1.0, 0.0;
    const StateVector initial{Eigen::Vector2d(0.5, 0.5),
                              Eigen::Vector2d(0.0, std::numbers::pi / 2)};
    const Trajectory traj = frozen_phase_baseline(initial, params, cfg);
    int changed = 0;
    for (const StateVector& s : traj.states) {
      if (std::memcmp(s.theta.data(), initial.theta.data(), 2 * sizeof(double)) != 0) ++changed;
    }
    checks.push_back(at_most("frozen-phase samples with moved theta", changed, 0.0));
  }

  {
    SignVector signs(2);
    signs << 1, -1;
    const ConvergenceFit fit = measure_convergence(Eigen::Vector2d(0.3, 0.6), AlphaVector(signs),
                                                   1.0, {0.1, 0.05, 0.025, 0.0125}, 2.0);
    checks.push_back(at_most("|RK4 convergence slope - 4|", std::abs(fit.slope - 4.0), 0.3));
  }

  {
    IntegratorConfig cfg = IntegratorConfig::defaults_for(1.0);
    const ModelParams params = ModelParams::zeros(2);
    double worst = 0.0;
    for (double a : {0.2, 0.5, 0.8}) {
      for (double b : {0.3, 0.6}) {
        const StateVector initial{Eigen::Vector2d(a, b), Eigen::Vector2d(0.0, std::numbers::pi)};
        const RunResult run = integrate_outcome(Law::Reduction, initial, params, cfg);
        const Eigen::VectorXd rates = reduction_rates_for(initial, params);
        const double predicted = predicted_collapse_time(initial.x, rates, cfg.epsilon);
        const double t = run.collapse_time.value_or(std::numeric_limits<double>::infinity());
        worst = std::max(worst, std::abs(t - predicted) / cfg.dt);
      }
    }
    checks.push_back(at_most("collapse time vs analytic, in units of dt", worst, 2.0));
  }

  {
    const Eigen::VectorXd oracle = sign_config_oracle(3, PhaseMode::Independent);
    checks.push_back(at_most("three-state oracle total probability error", std::abs(oracle.sum() - 1.0), 1e-15));
  }

  return checks;
}

}  // namespace collapse
