#pragma once

// Numerical cross-checks of the model's analytic statements.

#include <string>
#include <vector>

#include "collapse/integrator.hpp"
#include "collapse/model.hpp"

namespace collapse {

/// Max |x_ode(t) - closed_form_x(t)| over t in [0, 10/g] for a single
/// decoupled component. The ODE rate follows the convention: g f alpha for
/// OdeConsistent, g f alpha / 2 for AsPrinted.
double verify_closed_form(double x0, double g, int f_alpha, RateConvention convention, double dt);

/// Max |x_ode(t) - closed_form_x(t)| over t in [0, 10/g] when the AsPrinted
/// closed form is compared against the full-rate ODE x' = g f alpha x (1 - x^2).
double closed_form_rate_mismatch(double x0, double g, int f_alpha, double dt);

/// closed_form_x(OdeConsistent) - closed_form_x(AsPrinted) at time t.
double convention_gap(double x0, double g, int f_alpha, double t);

/// Full law with phases held fixed.
Trajectory frozen_phase_baseline(const StateVector& initial, const ModelParams& params,
                                 const IntegratorConfig& cfg);

/// max_i |norm_series[i] - norm_series[0]|.
double norm_drift_scan(const Trajectory& trajectory);

/// Max-norm error of fixed-step RK4 on the decoupled reduction law against
/// the closed form at `horizon`. `horizon / dt` must be an integer.
double reduction_global_error(const Eigen::VectorXd& x0, const AlphaVector& alpha, double g,
                              double dt, double horizon);

struct ConvergenceFit {
  std::vector<double> step_sizes;
  std::vector<double> errors;
  double slope = 0.0;  // least squares slope of log(error) vs log(dt)
};

ConvergenceFit measure_convergence(const Eigen::VectorXd& x0, const AlphaVector& alpha, double g,
                                   const std::vector<double>& step_sizes, double horizon);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

/// Random symmetric matrix with entries uniform in [-1, 1].
Eigen::MatrixXd random_symmetric(Index n, std::uint64_t seed);

struct VerifyCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool passed = false;
  /// Checks that confirm a known discrepancy; they report but never fail.
  bool expected_mismatch = false;
  std::string comparison;  // "<=" or ">"
};

/// The diagnostics suite used by `verify`.
std::vector<VerifyCheck> run_verification_suite();

}  // namespace collapse
