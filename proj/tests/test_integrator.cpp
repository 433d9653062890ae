#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <random>

#include "collapse/diagnostics.hpp"
#include "collapse/integrator.hpp"

using namespace collapse;
using std::numbers::pi;

namespace {

StateVector two_state(double x1, double x2, double th1, double th2) {
  return StateVector{Eigen::Vector2d(x1, x2), Eigen::Vector2d(th1, th2)};
}

// Euler-free oracle: tiny-step midpoint integration of x' = r x (1 - x^2)
// until x^2 crosses `target_u`, returning the interpolated crossing time.
double crossing_time_oracle(double x0, double r, double target_u) {
  const double h = 1e-6;
  double x = x0;
  double t = 0.0;
  auto f = [r](double v) { return r * v * (1 - v * v); };
  while (x * x < target_u) {
    const double mid = x + 0.5 * h * f(x);
    const double next = x + h * f(mid);
    if (next * next >= target_u) {
      const double frac = (target_u - x * x) / (next * next - x * x);
      return t + frac * h;
    }
    x = next;
    t += h;
  }
  return t;
}

}  // namespace

TEST_CASE("step_rk4 with a zero field leaves the state unchanged") {
  const StateVector s = two_state(0.3, 0.6, 1.0, -2.0);
  auto zero = [](const Eigen::VectorXd& x, const Eigen::VectorXd&, StateRate& out) {
    out.x_dot.setZero(x.size());
    out.theta_dot.setZero(x.size());
  };
  const StateVector next = step_rk4(zero, s, 0.1);
  CHECK(next.x == s.x);
  CHECK(next.theta == s.theta);
  CHECK_THROWS_AS(step_rk4(zero, s, 0.0), ConfigError);
}

TEST_CASE("step_rk4 advances a free phase exactly") {
  ModelParams p = ModelParams::zeros(2);
  p.omega << 1.0, 2.0;
  const StateVector s = two_state(0.5, 0.5, 0.25, 0.0);
  const StateVector next = step_rk4(FullField<double>{&p}, s, 0.1);
  CHECK(std::abs(next.theta[0] - (0.25 - 0.1)) <= 1e-9);
  CHECK(std::abs(next.theta[1] - (0.0 - 0.2)) <= 1e-9);
  CHECK(next.x == s.x);
}

TEST_CASE("step_rk4 local and global error orders") {
  // x' = x (1 - x^2) from x0 = 0.4; closed form with lambda = 2.
  auto exact = [](double t) { return closed_form_x(t, 0.4, 1.0, 1, 1.0, RateConvention::OdeConsistent); };
  const ReductionField<double> field{Eigen::VectorXd::Constant(1, 1.0)};
  auto one_step_error = [&](double h) {
    StateVector s{Eigen::VectorXd::Constant(1, 0.4), Eigen::VectorXd::Zero(1)};
    Rk4Stepper<double> stepper;
    stepper.step(field, s, h);
    return std::abs(s.x[0] - exact(h));
  };
  // local truncation error is O(h^5)
  const double local_ratio = one_step_error(0.1) / one_step_error(0.05);
  CHECK(local_ratio > 28.0);
  CHECK(local_ratio < 36.0);

  auto global_error = [&](double h) {
    StateVector s{Eigen::VectorXd::Constant(1, 0.4), Eigen::VectorXd::Zero(1)};
    Rk4Stepper<double> stepper;
    const int steps = static_cast<int>(std::lround(2.0 / h));
    for (int i = 0; i < steps; ++i) stepper.step(field, s, h);
    return std::abs(s.x[0] - exact(2.0));
  };
  const double global_ratio = global_error(0.1) / global_error(0.05);
  CHECK(global_ratio > 14.0);
  CHECK(global_ratio < 18.0);
}

TEST_CASE("the scalar reduction step agrees with the generic stepper") {
  const ReductionField<double> field{Eigen::Vector3d(1.0, -2.0, 0.5)};
  auto as_function = [&](const Eigen::VectorXd& x, const Eigen::VectorXd& th, StateRate& out) {
    field(x, th, out);
  };
  StateVector a{Eigen::Vector3d(0.2, 0.7, 0.9), Eigen::Vector3d(0.1, 0.2, 0.3)};
  StateVector b = a;
  Rk4Stepper<double> stepper;
  for (int i = 0; i < 200; ++i) {
    stepper.step(field, a, 0.01);
    stepper.step(as_function, b, 0.01);
  }
  CHECK((a.x - b.x).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(a.theta == b.theta);
}

TEST_CASE("step overflow is reported rather than clamped") {
  const ReductionField<double> field{Eigen::Vector2d(40.0, -40.0)};
  StateVector s = two_state(0.9, 0.1, 0, 0);
  Rk4Stepper<double> stepper;
  CHECK_THROWS_AS(stepper.step(field, s, 0.5), StepOverflow);

  Eigen::VectorXd x(2);
  x << -5e-13, 1.0 + 5e-13;
  Rk4Stepper<double>::clamp_probabilities(x);
  CHECK(x == Eigen::Vector2d(0.0, 1.0));
  x << -1e-11, 0.5;
  CHECK_THROWS_AS(Rk4Stepper<double>::clamp_probabilities(x), StepOverflow);
}

TEST_CASE("classify_outcome") {
  CHECK(classify_outcome(Eigen::Vector2d(0.9995, 0.0002), 1e-3) == OutcomeClass::collapse_to(0));
  CHECK(classify_outcome(Eigen::Vector2d(0.0002, 0.9995), 1e-3) == OutcomeClass::collapse_to(1));
  CHECK(classify_outcome(Eigen::Vector2d(0.0001, 0.0004), 1e-3) == OutcomeClass::all_decay());
  CHECK(classify_outcome(Eigen::Vector2d(0.9991, 0.9999), 1e-3) == OutcomeClass::all_grow());
  CHECK(classify_outcome(Eigen::Vector2d(0.99, 0.5), 1e-3) == OutcomeClass::unresolved());
  CHECK(classify_outcome(Eigen::Vector3d(0.9995, 0.9995, 0.0), 1e-3) == OutcomeClass::unresolved());
  CHECK(OutcomeClass::collapse_to(0).label() == "collapse_to_1");
  CHECK(OutcomeClass::all_decay().label() == "all_decay");
}

TEST_CASE("integrate: reduction examples") {
  const ModelParams params = ModelParams::zeros(2);
  const IntegratorConfig cfg = IntegratorConfig::defaults_for(1.0);

  SUBCASE("opposite signs collapse onto the first state") {
    const Trajectory traj = integrate(Law::Reduction, two_state(0.5, 0.5, 0.0, pi), params, cfg);
    CHECK(traj.outcome == OutcomeClass::collapse_to(0));
    REQUIRE(traj.collapse_time.has_value());
    CHECK(traj.q_series.back() >= 1.0 - 2 * cfg.epsilon);
    CHECK(traj.q_series.front() == 0.0);
  }
  SUBCASE("equal positive signs decay") {
    const Trajectory traj = integrate(Law::Reduction, two_state(0.5, 0.5, 0.0, 0.1), params, cfg);
    CHECK(traj.outcome == OutcomeClass::all_decay());
    CHECK_FALSE(traj.collapse_time.has_value());
    CHECK(traj.final_state().x.maxCoeff() <= cfg.epsilon);
  }
  SUBCASE("equal negative signs grow") {
    const Trajectory traj = integrate(Law::Reduction, two_state(0.5, 0.5, pi, 3.0), params, cfg);
    CHECK(traj.outcome == OutcomeClass::all_grow());
  }
  SUBCASE("phases are held fixed") {
    const Trajectory traj = integrate(Law::Reduction, two_state(0.3, 0.6, 0.2, 2.0), params, cfg);
    for (const StateVector& s : traj.states) CHECK(s.theta == Eigen::Vector2d(0.2, 2.0));
  }
  SUBCASE("singular phase propagates") {
    CHECK_THROWS_AS(integrate(Law::Reduction, two_state(0.5, 0.5, 0.0, pi / 2), params, cfg),
                    SingularPhase);
  }
}

TEST_CASE("integrate: free full dynamics never collapses") {
  ModelParams params = ModelParams::zeros(2);
  params.omega << 1.0, -0.5;
  IntegratorConfig cfg;
  cfg.dt = 1e-2;
  cfg.t_max = 10.0;
  const StateVector initial = two_state(0.3, 0.7, 0.0, 0.0);
  const Trajectory traj = integrate(Law::Full, initial, params, cfg);
  CHECK(traj.outcome == OutcomeClass::unresolved());
  CHECK(traj.times.back() == doctest::Approx(10.0));
  for (const StateVector& s : traj.states) CHECK(s.x == initial.x);
}

TEST_CASE("trajectory invariants") {
  const ModelParams params = ModelParams::zeros(2);
  IntegratorConfig cfg = IntegratorConfig::defaults_for(1.0);
  cfg.sample_stride = 7;
  for (bool stop : {true, false}) {
    cfg.stop_on_outcome = stop;
    const Trajectory traj = integrate(Law::Reduction, two_state(0.35, 0.8, pi, 0.0), params, cfg);
    REQUIRE(traj.size() == traj.states.size());
    REQUIRE(traj.size() == traj.q_series.size());
    REQUIRE(traj.size() == traj.norm_series.size());
    for (std::size_t i = 0; i < traj.size(); ++i) {
      if (i > 0) CHECK(traj.times[i] > traj.times[i - 1]);
      CHECK(traj.q_series[i] == traj.states[i].x[0] - traj.states[i].x[1]);
      CHECK(traj.norm_series[i] == traj.states[i].x.sum());
    }
    CHECK(traj.outcome == OutcomeClass::collapse_to(1));
    CHECK(traj.collapse_time.has_value());
    if (!stop) {
      CHECK(traj.times.back() == doctest::Approx(cfg.t_max));
      CHECK(traj.q_series.back() < -0.999);
    }
  }
  // N != 2 records no q series
  ModelParams p3 = ModelParams::zeros(3);
  const Trajectory t3 = integrate(
      Law::Reduction, StateVector{Eigen::Vector3d(0.5, 0.5, 0.5), Eigen::Vector3d(0, pi, pi)}, p3,
      IntegratorConfig::defaults_for(1.0));
  CHECK(t3.q_series.empty());
  CHECK(t3.outcome == OutcomeClass::collapse_to(0));
}

TEST_CASE("integrate validates its inputs") {
  const ModelParams params = ModelParams::zeros(2);
  IntegratorConfig cfg;
  cfg.epsilon = 0.6;
  CHECK_THROWS_AS(integrate(Law::Reduction, two_state(0.5, 0.5, 0, pi), params, cfg), ConfigError);
  cfg = IntegratorConfig{};
  cfg.dt = 100.0;
  CHECK_THROWS_AS(integrate(Law::Reduction, two_state(0.5, 0.5, 0, pi), params, cfg), ConfigError);
  CHECK_THROWS_AS(integrate(Law::Full, two_state(0.5, 0.5, 0, pi), ModelParams::zeros(3),
                            IntegratorConfig{}),
                  WrongDimension);
}

TEST_CASE("reduction_time_analytic") {
  const double x0 = std::sqrt(0.5);
  CHECK(reduction_time_analytic(x0, 1.0, 0.01) == doctest::Approx(std::log(99.0)).epsilon(1e-14));
  CHECK(reduction_time_analytic(x0, 1.0, 0.01) == doctest::Approx(4.59512).epsilon(1e-6));
  // lambda = 1 means x' = (1/2) x (1 - x^2)
  CHECK(crossing_time_oracle(x0, 0.5, 0.99) == doctest::Approx(std::log(99.0)).epsilon(1e-6));

  CHECK(reduction_time_analytic(std::sqrt(0.99), 1.0, 0.01) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(reduction_time_analytic(0.3, 2.0, 0.05) ==
        doctest::Approx(0.5 * reduction_time_analytic(0.3, 1.0, 0.05)).epsilon(1e-14));
  // decaying mirror: time for x^2 to reach epsilon
  CHECK(reduction_time_analytic(x0, -1.0, 0.01) == doctest::Approx(std::log(99.0)).epsilon(1e-14));

  CHECK_THROWS_AS(reduction_time_analytic(0.999, 1.0, 0.01), DegenerateInitial);
  CHECK_THROWS_AS(reduction_time_analytic(0.01, -1.0, 0.01), DegenerateInitial);
  CHECK_THROWS_AS(reduction_time_analytic(0.0, 1.0, 0.01), DegenerateInitial);
  CHECK_THROWS_AS(reduction_time_analytic(0.5, 0.0, 0.01), ConfigError);
}

TEST_CASE("attractor grid follows the sign table (property)") {
  const ModelParams params = ModelParams::zeros(2);
  const IntegratorConfig cfg = IntegratorConfig::defaults_for(1.0);
  struct Case {
    double th1, th2;
    OutcomeClass expected;
  };
  const Case cases[] = {{0.0, pi, OutcomeClass::collapse_to(0)},
                        {pi, 0.0, OutcomeClass::collapse_to(1)},
                        {0.0, 0.0, OutcomeClass::all_decay()},
                        {pi, pi, OutcomeClass::all_grow()}};
  for (const Case& c : cases) {
    for (int i = 1; i <= 9; i += 2) {
      for (int j = 1; j <= 9; j += 2) {
        const StateVector s = two_state(0.1 * i, 0.1 * j, c.th1, c.th2);
        const RunResult run = integrate_outcome(Law::Reduction, s, params, cfg);
        CHECK(run.outcome == c.expected);
        const Eigen::VectorXd rates = reduction_rates_for(s, params);
        CHECK(asymptotic_outcome(rates) == c.expected);
        if (c.expected.is_collapse()) {
          REQUIRE(run.collapse_time.has_value());
          CHECK(std::abs(*run.collapse_time - predicted_collapse_time(s.x, rates, cfg.epsilon)) <=
                2 * cfg.dt);
        }
      }
    }
  }
}

TEST_CASE("reduction trajectories are monotone per component (property)") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unit(0.05, 0.95);
  std::uniform_real_distribution<double> phase(0.0, 2 * pi);
  IntegratorConfig cfg = IntegratorConfig::defaults_for(1.0);
  cfg.sample_stride = 1;
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 + trial % 3;
    StateVector s{Eigen::VectorXd(n), Eigen::VectorXd(n)};
    for (Index i = 0; i < n; ++i) {
      s.x[i] = unit(rng);
      s.theta[i] = phase(rng);
    }
    const ModelParams params = ModelParams::zeros(n);
    const Eigen::VectorXd rates = reduction_rates_for(s, params);
    const Trajectory traj = integrate(Law::Reduction, s, params, cfg);
    for (std::size_t k = 1; k < traj.size(); ++k) {
      for (Index i = 0; i < n; ++i) {
        const double dx = traj.states[k].x[i] - traj.states[k - 1].x[i];
        CHECK(dx * (rates[i] > 0 ? 1.0 : -1.0) >= -1e-10);
      }
    }
  }
}

TEST_CASE("global error scales as dt^4") {
  SignVector signs(2);
  signs << 1, -1;
  const ConvergenceFit fit = measure_convergence(Eigen::Vector2d(0.3, 0.6), AlphaVector(signs), 1.0,
                                                 {0.1, 0.05, 0.025, 0.0125}, 2.0);
  CHECK(std::abs(fit.slope - 4.0) <= 0.3);
}

TEST_CASE("norm is conserved by the full law with symmetric H") {
  ModelParams params = ModelParams::zeros(3);
  params.h_matrix << 0.3, -0.8, 0.2, -0.8, 0.1, 0.6, 0.2, 0.6, -0.5;
  params.h_matrix *= 0.25;
  params.omega << 0.5, 2.0, 3.5;
  IntegratorConfig cfg;
  cfg.dt = 1e-3;
  cfg.t_max = 10.0;
  const StateVector initial{Eigen::Vector3d::Constant(1.0 / 3.0), Eigen::Vector3d(0.1, 0.9, 1.7)};
  const Trajectory traj = integrate(Law::Full, initial, params, cfg);
  CHECK(traj.outcome == OutcomeClass::unresolved());
  CHECK(norm_drift_scan(traj) <= 1e-6);
}

TEST_CASE("predicted_collapse_time uses x thresholds") {
  const Eigen::Vector2d x0(0.5, 0.5);
  const Eigen::Vector2d rates(1.0, -1.0);
  const double eps = 1e-3;
  // grower: u from 0.25 to (1-eps)^2 at rate 2; decayer: u from 0.25 to eps^2 at rate -2
  const double grow = std::log(((1 - eps) * (1 - eps) / (1 - (1 - eps) * (1 - eps))) / (1.0 / 3.0)) / 2;
  const double decay = std::log((eps * eps / (1 - eps * eps)) / (1.0 / 3.0)) / -2;
  CHECK(predicted_collapse_time<double>(x0, rates, eps) == doctest::Approx(std::max(grow, decay)));
  CHECK(std::isinf(predicted_collapse_time<double>(x0, Eigen::Vector2d(1.0, 1.0), eps)) == false);
  CHECK(std::isinf(predicted_collapse_time<double>(Eigen::Vector3d(0.5, 0.5, 0.5),
                                                   Eigen::Vector3d(1.0, 1.0, -1.0), eps)));
}

TEST_CASE("long double trajectories") {
  using LD = long double;
  BasicModelParams<LD> params = BasicModelParams<LD>::zeros(2);
  BasicStateVector<LD> s{Vector<LD>::Constant(2, 0.5L), Vector<LD>(2)};
  s.theta << 0.0L, 3.0L;
  const BasicTrajectory<LD> traj = integrate(Law::Reduction, s, params, IntegratorConfig::defaults_for(1.0));
  CHECK(traj.outcome == OutcomeClass::collapse_to(0));
}
