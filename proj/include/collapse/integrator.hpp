#pragma once

// Fixed-step RK4 integration of either law of motion, collapse detection and
// reduction-time estimates.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "collapse/model.hpp"

namespace collapse {

enum class Law { Reduction, Full };

class OutcomeClass {
 public:
  enum class Kind { CollapseTo, AllDecay, AllGrow, Unresolved };

  static OutcomeClass collapse_to(Index k) { return OutcomeClass(Kind::CollapseTo, k); }
  static OutcomeClass all_decay() { return OutcomeClass(Kind::AllDecay, -1); }
  static OutcomeClass all_grow() { return OutcomeClass(Kind::AllGrow, -1); }
  static OutcomeClass unresolved() { return OutcomeClass(Kind::Unresolved, -1); }

  Kind kind() const { return kind_; }
  /// Selected state for CollapseTo, -1 otherwise.
  Index index() const { return index_; }
  bool is_collapse() const { return kind_ == Kind::CollapseTo; }
  /// Collapse and the two degenerate branches are absorbing under reduction.
  bool is_terminal() const { return kind_ != Kind::Unresolved; }

  /// Stable label; CollapseTo uses the 1-based state number ("collapse_to_1").
  std::string label() const {
    switch (kind_) {
      case Kind::CollapseTo: return "collapse_to_" + std::to_string(index_ + 1);
      case Kind::AllDecay: return "all_decay";
      case Kind::AllGrow: return "all_grow";
      case Kind::Unresolved: return "unresolved";
    }
    return "unresolved";
  }

  friend bool operator==(const OutcomeClass&, const OutcomeClass&) = default;

 private:
  OutcomeClass(Kind kind, Index index) : kind_(kind), index_(index) {}

  Kind kind_;
  Index index_;
};

struct IntegratorConfig {
  double dt = 1e-3;
  double t_max = 50.0;
  double epsilon = 1e-3;
  std::int64_t sample_stride = 10;
  /// Stop at the first terminal outcome; otherwise keep stepping to t_max
  /// with the first terminal outcome and its time latched.
  bool stop_on_outcome = true;

  /// dt = 1e-3/g, t_max = 50/g, epsilon = 1e-3, stride 10.
  static IntegratorConfig defaults_for(double g) {
    IntegratorConfig cfg;
    cfg.dt = 1e-3 / g;
    cfg.t_max = 50.0 / g;
    return cfg;
  }

  void validate() const {
    if (!(dt > 0.0)) throw ConfigError("integrator: dt must be positive");
    if (!(t_max > 0.0)) throw ConfigError("integrator: t_max must be positive");
    if (!(dt < t_max)) throw ConfigError("integrator: dt must be smaller than t_max");
    if (!(epsilon > 0.0 && epsilon < 0.5)) {
      throw ConfigError("integrator: epsilon must lie in (0, 0.5)");
    }
    if (sample_stride < 1) throw ConfigError("integrator: sample_stride must be >= 1");
  }
};

template <typename Derived>
OutcomeClass classify_outcome(const Eigen::MatrixBase<Derived>& x, double epsilon) {
  using Scalar = typename Derived::Scalar;
  const Scalar lo = Scalar(epsilon);
  const Scalar hi = Scalar(1) - Scalar(epsilon);
  Index high_count = 0;
  Index low_count = 0;
  Index high_index = -1;
  for (Index n = 0; n < x.size(); ++n) {
    if (x[n] >= hi) {
      ++high_count;
      high_index = n;
    } else if (x[n] <= lo) {
      ++low_count;
    }
  }
  const Index n_states = x.size();
  if (low_count == n_states) return OutcomeClass::all_decay();
  if (high_count == n_states) return OutcomeClass::all_grow();
  if (high_count == 1 && low_count == n_states - 1) return OutcomeClass::collapse_to(high_index);
  return OutcomeClass::unresolved();
}

template <typename Scalar>
OutcomeClass classify_outcome(const BasicStateVector<Scalar>& state, double epsilon) {
  return classify_outcome(state.x, epsilon);
}

/// Asymptotic outcome implied by the signs of the per-state reduction rates.
/// Components with zero rate never move, so their presence leaves the run
/// unresolved (for interior initial values).
template <typename Derived>
OutcomeClass asymptotic_outcome(const Eigen::MatrixBase<Derived>& rates) {
  Index growers = 0;
  Index decayers = 0;
  Index grower = -1;
  for (Index n = 0; n < rates.size(); ++n) {
    if (rates[n] > 0) {
      ++growers;
      grower = n;
    } else if (rates[n] < 0) {
      ++decayers;
    }
  }
  const Index n_states = rates.size();
  if (decayers == n_states) return OutcomeClass::all_decay();
  if (growers == n_states) return OutcomeClass::all_grow();
  if (growers == 1 && decayers == n_states - 1) return OutcomeClass::collapse_to(grower);
  return OutcomeClass::unresolved();
}

/// Derivative of the reduction law with precomputed rates g f_n alpha_n.
/// Phases do not move.
template <typename Scalar>
struct ReductionField {
  Vector<Scalar> rates;

  void operator()(const Vector<Scalar>& x, const Vector<Scalar>&,
                  BasicStateRate<Scalar>& out) const {
    out.x_dot = rates.cwiseProduct(x).cwiseProduct(
        (Scalar(1) - x.array().square()).matrix());
    out.theta_dot.setZero(x.size());
  }
};

/// Reusable RK4 stage storage so repeated steps do not allocate.
template <typename Scalar>
class Rk4Stepper {
 public:
  /// `rhs(x, theta, rate)` fills `rate` with the derivative at (x, theta).
  template <typename Rhs>
    requires(!std::is_same_v<std::remove_cvref_t<Rhs>, ReductionField<Scalar>>)
  void step(Rhs&& rhs, BasicStateVector<Scalar>& state, Scalar dt) {
    const Scalar half = dt / Scalar(2);
    rhs(state.x, state.theta, k1_);
    x_tmp_ = state.x + half * k1_.x_dot;
    th_tmp_ = state.theta + half * k1_.theta_dot;
    rhs(x_tmp_, th_tmp_, k2_);
    x_tmp_ = state.x + half * k2_.x_dot;
    th_tmp_ = state.theta + half * k2_.theta_dot;
    rhs(x_tmp_, th_tmp_, k3_);
    x_tmp_ = state.x + dt * k3_.x_dot;
    th_tmp_ = state.theta + dt * k3_.theta_dot;
    rhs(x_tmp_, th_tmp_, k4_);
    const Scalar w = dt / Scalar(6);
    state.x += w * (k1_.x_dot + Scalar(2) * k2_.x_dot + Scalar(2) * k3_.x_dot + k4_.x_dot);
    state.theta += w * (k1_.theta_dot + Scalar(2) * k2_.theta_dot +
                        Scalar(2) * k3_.theta_dot + k4_.theta_dot);
    clamp_probabilities(state.x);
  }

  /// The reduction law is decoupled, so each component takes its own scalar
  /// RK4 step; phases are untouched.
  void step(const ReductionField<Scalar>& field, BasicStateVector<Scalar>& state, Scalar dt) {
    const Scalar half = dt / Scalar(2);
    const Scalar w = dt / Scalar(6);
    for (Index n = 0; n < state.x.size(); ++n) {
      const Scalar r = field.rates[n];
      auto rate = [r](Scalar v) { return r * v * (Scalar(1) - v * v); };
      const Scalar x = state.x[n];
      const Scalar k1 = rate(x);
      const Scalar k2 = rate(x + half * k1);
      const Scalar k3 = rate(x + half * k2);
      const Scalar k4 = rate(x + dt * k3);
      state.x[n] = x + w * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
    }
    clamp_probabilities(state.x);
  }

  /// Clamp overshoot of at most 1e-12; anything larger is a StepOverflow.
  static void clamp_probabilities(Vector<Scalar>& x) {
    const Scalar tol = Scalar(kClampTolerance);
    for (Index n = 0; n < x.size(); ++n) {
      const Scalar v = x[n];
      if (!(v >= -tol && v <= Scalar(1) + tol)) {
        throw StepOverflow("step overflow: x[" + std::to_string(n) + "] = " +
                           std::to_string(static_cast<double>(v)) +
                           " left [0, 1]; reduce dt");
      }
      if (v < Scalar(0)) x[n] = Scalar(0);
      if (v > Scalar(1)) x[n] = Scalar(1);
    }
  }

 private:
  BasicStateRate<Scalar> k1_, k2_, k3_, k4_;
  Vector<Scalar> x_tmp_, th_tmp_;
};

/// One classical RK4 step.
template <typename Rhs, typename Scalar>
BasicStateVector<Scalar> step_rk4(Rhs&& rhs, const BasicStateVector<Scalar>& state, Scalar dt) {
  if (!(dt > Scalar(0))) throw ConfigError("step_rk4: dt must be positive");
  BasicStateVector<Scalar> next = state;
  Rk4Stepper<Scalar> stepper;
  stepper.step(rhs, next, dt);
  return next;
}

/// Derivative of the full coupled law.
template <typename Scalar>
struct FullField {
  const BasicModelParams<Scalar>* params;

  void operator()(const Vector<Scalar>& x, const Vector<Scalar>& theta,
                  BasicStateRate<Scalar>& out) const {
    full_rhs_into(x, theta, *params, out);
  }
};

template <typename Scalar>
struct BasicTrajectory {
  std::vector<Scalar> times;
  std::vector<BasicStateVector<Scalar>> states;
  std::vector<Scalar> q_series;  // empty unless N == 2
  std::vector<Scalar> norm_series;
  OutcomeClass outcome = OutcomeClass::unresolved();
  std::optional<Scalar> collapse_time;

  std::size_t size() const { return times.size(); }
  const BasicStateVector<Scalar>& final_state() const { return states.back(); }
};

using Trajectory = BasicTrajectory<double>;

/// Outcome of a run without the recorded samples.
template <typename Scalar>
struct BasicRunResult {
  OutcomeClass outcome = OutcomeClass::unresolved();
  std::optional<Scalar> collapse_time;
  BasicStateVector<Scalar> final_state;
  Scalar final_time = Scalar(0);
};

using RunResult = BasicRunResult<double>;

namespace detail {

inline std::int64_t step_count(double t_max, double dt) {
  return static_cast<std::int64_t>(std::ceil(t_max / dt * (1.0 - 1e-12)));
}

template <typename Scalar, typename Field, typename OnSample>
BasicRunResult<Scalar> drive(Field& field, BasicStateVector<Scalar> state,
                             const IntegratorConfig& cfg, OnSample&& on_sample) {
  const Scalar dt = Scalar(cfg.dt);
  const std::int64_t n_steps = step_count(cfg.t_max, cfg.dt);
  Rk4Stepper<Scalar> stepper;
  BasicRunResult<Scalar> result;

  result.outcome = classify_outcome(state.x, cfg.epsilon);
  on_sample(Scalar(0), state, std::int64_t{0},
            result.outcome.is_terminal() && cfg.stop_on_outcome);
  if (result.outcome.is_collapse()) result.collapse_time = Scalar(0);

  std::int64_t i = 0;
  bool latched = result.outcome.is_terminal();
  while (i < n_steps && !(latched && cfg.stop_on_outcome)) {
    stepper.step(field, state, dt);
    ++i;
    const Scalar t = Scalar(i) * dt;
    if (!latched) {
      result.outcome = classify_outcome(state.x, cfg.epsilon);
      latched = result.outcome.is_terminal();
      if (result.outcome.is_collapse()) result.collapse_time = t;
    }
    on_sample(t, state, i, (latched && cfg.stop_on_outcome) || i == n_steps);
  }
  result.final_time = Scalar(i) * dt;
  result.final_state = std::move(state);
  return result;
}

}  // namespace detail

/// Rates g f_n alpha_n for the reduction law, with alpha frozen from theta.
template <typename Scalar>
Vector<Scalar> reduction_rates_for(const BasicStateVector<Scalar>& initial,
                                   const BasicModelParams<Scalar>& params) {
  const AlphaVector alpha = alpha_vector(initial.theta);
  return reduction_rates(alpha, coupling_vector<Scalar>(alpha), params.g);
}

/// Integrate without recording samples. Used for ensembles.
template <typename Scalar>
BasicRunResult<Scalar> integrate_outcome(Law law, const BasicStateVector<Scalar>& initial,
                                         const BasicModelParams<Scalar>& params,
                                         const IntegratorConfig& cfg) {
  validate(initial);
  cfg.validate();
  auto ignore = [](Scalar, const BasicStateVector<Scalar>&, std::int64_t, bool) {};
  if (law == Law::Reduction) {
    if (!(params.g > Scalar(0))) throw ConfigError("params: g must be positive");
    ReductionField<Scalar> field{reduction_rates_for(initial, params)};
    return detail::drive(field, initial, cfg, ignore);
  }
  validate(params, initial.size());
  FullField<Scalar> field{&params};
  return detail::drive(field, initial, cfg, ignore);
}

/// Integrate until a terminal outcome or t_max, recording every
/// sample_stride steps plus the initial and final states.
template <typename Scalar>
BasicTrajectory<Scalar> integrate(Law law, const BasicStateVector<Scalar>& initial,
                                  const BasicModelParams<Scalar>& params,
                                  const IntegratorConfig& cfg) {
  validate(initial);
  cfg.validate();
  BasicTrajectory<Scalar> traj;
  const bool two_state = initial.size() == 2;
  auto record = [&](Scalar t, const BasicStateVector<Scalar>& s, std::int64_t i, bool last) {
    if (i % cfg.sample_stride != 0 && !last) return;
    traj.times.push_back(t);
    traj.states.push_back(s);
    if (two_state) traj.q_series.push_back(s.x[0] - s.x[1]);
    traj.norm_series.push_back(s.x.sum());
  };

  BasicRunResult<Scalar> result;
  if (law == Law::Reduction) {
    if (!(params.g > Scalar(0))) throw ConfigError("params: g must be positive");
    ReductionField<Scalar> field{reduction_rates_for(initial, params)};
    result = detail::drive(field, initial, cfg, record);
  } else {
    validate(params, initial.size());
    FullField<Scalar> field{&params};
    result = detail::drive(field, initial, cfg, record);
  }
  traj.outcome = result.outcome;
  traj.collapse_time = result.collapse_time;
  return traj;
}

/// Time for u = x^2, following the logistic u' = lambda u (1 - u), to move
/// from u0 to u_target. Returns 0 when u0 is already at or past the target in
/// the direction of motion, and +inf when the target is never reached.
template <typename Scalar>
Scalar threshold_crossing_time(Scalar u0, Scalar lambda, Scalar u_target) {
  using std::abs;
  using std::log;
  if (lambda > Scalar(0)) {
    if (u0 >= u_target) return Scalar(0);
  } else if (lambda < Scalar(0)) {
    if (u0 <= u_target) return Scalar(0);
  } else {
    return std::numeric_limits<Scalar>::infinity();
  }
  // odds(u) = u / (1 - u) evolves as odds0 * exp(lambda t)
  const Scalar odds0 = u0 / (Scalar(1) - u0);
  const Scalar odds_target = u_target / (Scalar(1) - u_target);
  return log(odds_target / odds0) / lambda;
}

/// Time for x^2 to reach 1 - epsilon (lambda > 0) or epsilon (lambda < 0),
/// where lambda is the exponent of the closed form.
template <typename Scalar>
Scalar reduction_time_analytic(Scalar x0, Scalar lambda, Scalar epsilon) {
  if (!(x0 > Scalar(0) && x0 < Scalar(1))) {
    throw DegenerateInitial("reduction_time_analytic: x0 must lie strictly inside (0, 1)");
  }
  if (lambda == Scalar(0)) throw ConfigError("reduction_time_analytic: lambda must be nonzero");
  if (!(epsilon > Scalar(0) && epsilon < Scalar(0.5))) {
    throw ConfigError("reduction_time_analytic: epsilon must lie in (0, 0.5)");
  }
  const Scalar u0 = x0 * x0;
  const Scalar target = lambda > Scalar(0) ? Scalar(1) - epsilon : epsilon;
  const bool past = lambda > Scalar(0) ? u0 > target : u0 < target;
  if (past) {
    throw DegenerateInitial("reduction_time_analytic: x0^2 is already past the threshold");
  }
  return threshold_crossing_time(u0, lambda, target);
}

/// Continuous-time moment at which classify_outcome first reports the
/// asymptotic outcome for decoupled reduction with per-state rates
/// r_n = g f_n alpha_n. A component counts as grown once x >= 1 - epsilon,
/// i.e. u >= (1 - epsilon)^2, and as decayed once u <= epsilon^2; the closed
/// form exponent in u is 2 r_n. Returns +inf if the outcome is unresolved.
template <typename Scalar>
Scalar predicted_collapse_time(const Vector<Scalar>& x0, const Vector<Scalar>& rates,
                               Scalar epsilon) {
  if (x0.size() != rates.size()) throw WrongDimension("predicted_collapse_time: size mismatch");
  if (!asymptotic_outcome(rates).is_terminal()) return std::numeric_limits<Scalar>::infinity();
  const Scalar grown = (Scalar(1) - epsilon) * (Scalar(1) - epsilon);
  const Scalar decayed = epsilon * epsilon;
  Scalar t = Scalar(0);
  for (Index n = 0; n < x0.size(); ++n) {
    const Scalar u0 = x0[n] * x0[n];
    const Scalar lambda = Scalar(2) * rates[n];
    const Scalar target = lambda > Scalar(0) ? grown : decayed;
    t = std::max(t, threshold_crossing_time(u0, lambda, target));
  }
  return t;
}

}  // namespace collapse
