#pragma once

// Phase-driven reduction model for an N-state superposition.
//
// The state is held in polar form, c_n = sqrt(x_n) exp(i theta_n). Two laws of
// motion are provided:
//
//   full dynamics     theta_n' = -omega_n - sum_m H_nm sqrt(x_m x_n) cos(theta_m - theta_n)
//                     x_n'     =           sum_m H_nm sqrt(x_m x_n) sin(theta_m - theta_n)
//
//   reduction         x_n' = g f_n(alpha) alpha_n x_n (1 - x_n^2)
//
// where alpha_n = sign(cos theta_n) is sampled once at collapse onset and f_n
// is the Heaviside coupling between the states.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "collapse/errors.hpp"

namespace collapse {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

using SignVector = Eigen::Matrix<int, Eigen::Dynamic, 1>;

/// Exponent used by the closed-form solution.
///
/// AsPrinted uses lambda = g f alpha, OdeConsistent uses lambda = 2 g f alpha.
/// Only the latter solves the reduction ODE; the former solves the same ODE
/// at half the rate.
enum class RateConvention { AsPrinted, OdeConsistent };

/// Independent draws one phase per state, Common one phase shared by all.
enum class PhaseMode { Independent, Common };

/// |cos(theta)| at or below this value leaves alpha undefined.
inline constexpr double kSingularPhaseTolerance = 1e-12;

/// Overshoot of a probability past [0, 1] that is still treated as roundoff.
inline constexpr double kClampTolerance = 1e-12;

template <typename Scalar>
struct BasicStateVector {
  Vector<Scalar> x;      // probabilities
  Vector<Scalar> theta;  // phases, radians

  Index size() const { return x.size(); }
};

using StateVector = BasicStateVector<double>;

/// Time derivative of a BasicStateVector.
template <typename Scalar>
struct BasicStateRate {
  Vector<Scalar> theta_dot;
  Vector<Scalar> x_dot;
};

using StateRate = BasicStateRate<double>;

template <typename Scalar>
void validate(const BasicStateVector<Scalar>& state) {
  if (state.x.size() != state.theta.size()) {
    throw WrongDimension("state: x has " + std::to_string(state.x.size()) +
                         " components but theta has " +
                         std::to_string(state.theta.size()));
  }
  if (state.x.size() < 2) {
    throw WrongDimension("state: at least two components are required");
  }
  for (Index n = 0; n < state.size(); ++n) {
    if (!(state.x[n] >= Scalar(0) && state.x[n] <= Scalar(1))) {
      throw ConfigError("state: x[" + std::to_string(n) + "] is outside [0, 1]");
    }
    if (!std::isfinite(static_cast<double>(state.theta[n]))) {
      throw ConfigError("state: theta[" + std::to_string(n) + "] is not finite");
    }
  }
}

template <typename Scalar>
BasicStateVector<Scalar> make_state(Vector<Scalar> x, Vector<Scalar> theta) {
  BasicStateVector<Scalar> state{std::move(x), std::move(theta)};
  validate(state);
  return state;
}

template <typename Scalar>
struct BasicModelParams {
  Vector<Scalar> omega;     // eigenfrequencies
  Matrix<Scalar> h_matrix;  // interaction matrix elements <n|H|m>
  Scalar g = Scalar(1);     // reduction strength
  RateConvention rate_convention = RateConvention::OdeConsistent;
  PhaseMode phase_mode = PhaseMode::Independent;
  bool frozen_phase = false;

  /// Zero frequencies and zero interaction for an n-state system.
  static BasicModelParams zeros(Index n) {
    BasicModelParams p;
    p.omega = Vector<Scalar>::Zero(n);
    p.h_matrix = Matrix<Scalar>::Zero(n, n);
    return p;
  }

  bool is_symmetric(Scalar tol = Scalar(1e-12)) const {
    return h_matrix.rows() == h_matrix.cols() &&
           (h_matrix - h_matrix.transpose()).cwiseAbs().maxCoeff() <= tol;
  }
};

using ModelParams = BasicModelParams<double>;

template <typename Scalar>
void validate(const BasicModelParams<Scalar>& params, Index n) {
  if (params.omega.size() != n) {
    throw WrongDimension("params: omega has " + std::to_string(params.omega.size()) +
                         " entries, expected " + std::to_string(n));
  }
  if (params.h_matrix.rows() != n || params.h_matrix.cols() != n) {
    throw WrongDimension("params: h_matrix must be " + std::to_string(n) + "x" +
                         std::to_string(n));
  }
  if (!(params.g > Scalar(0))) {
    throw ConfigError("params: g must be positive");
  }
}

/// Unit step with Theta_+(0) = 0.
template <typename Scalar>
constexpr int heaviside_plus(Scalar v) {
  return v > Scalar(0) ? 1 : 0;
}

/// sign(cos theta). Throws SingularPhase when |cos theta| <= 1e-12.
template <typename Scalar>
int alpha_from_phase(Scalar theta) {
  using std::abs;
  using std::cos;
  const Scalar c = cos(theta);
  if (!(abs(c) > Scalar(kSingularPhaseTolerance))) throw SingularPhase();
  return c > Scalar(0) ? 1 : -1;
}

/// Per-state signs alpha_n in {-1, +1}, fixed at collapse onset.
class AlphaVector {
 public:
  explicit AlphaVector(SignVector signs) : signs_(std::move(signs)) {
    for (Index n = 0; n < signs_.size(); ++n) {
      if (signs_[n] != 1 && signs_[n] != -1) {
        throw ConfigError("alpha: entry " + std::to_string(n) + " is not -1 or +1");
      }
    }
  }

  Index size() const { return signs_.size(); }
  int operator[](Index n) const { return signs_[n]; }
  const SignVector& signs() const { return signs_; }

  friend bool operator==(const AlphaVector& a, const AlphaVector& b) {
    return a.signs_ == b.signs_;
  }

 private:
  SignVector signs_;
};

template <typename Derived>
AlphaVector alpha_vector(const Eigen::MatrixBase<Derived>& theta) {
  SignVector signs(theta.size());
  for (Index n = 0; n < theta.size(); ++n) {
    try {
      signs[n] = alpha_from_phase(theta[n]);
    } catch (const SingularPhase&) {
      throw SingularPhase(static_cast<std::size_t>(n));
    }
  }
  return AlphaVector(std::move(signs));
}

template <typename Scalar>
AlphaVector alpha_vector(const BasicStateVector<Scalar>& state) {
  return alpha_vector(state.theta);
}

/// Heaviside coupling f_n(alpha), evaluated term by term:
///
///   f_n = [1 - 2 S] alpha_n + [1 - S] Theta_+(sum_{k!=n} (1 - Theta_+(-alpha_k))) [1 - alpha_n]
///
/// with S = sum_{k!=n} Theta_+(alpha_k). Integer valued.
inline int coupling_f_int(Index n, const AlphaVector& alpha) {
  int positives = 0;    // sum_{k!=n} Theta_+(alpha_k)
  int not_negative = 0; // sum_{k!=n} (1 - Theta_+(-alpha_k))
  for (Index k = 0; k < alpha.size(); ++k) {
    if (k == n) continue;
    positives += heaviside_plus(alpha[k]);
    not_negative += 1 - heaviside_plus(-alpha[k]);
  }
  const int a = alpha[n];
  return (1 - 2 * positives) * a + (1 - positives) * heaviside_plus(not_negative) * (1 - a);
}

template <typename Scalar = double>
Scalar coupling_f(Index n, const AlphaVector& alpha) {
  if (n < 0 || n >= alpha.size()) {
    throw WrongDimension("coupling_f: index " + std::to_string(n) + " out of range");
  }
  return static_cast<Scalar>(coupling_f_int(n, alpha));
}

template <typename Scalar = double>
Vector<Scalar> coupling_vector(const AlphaVector& alpha) {
  Vector<Scalar> f(alpha.size());
  for (Index n = 0; n < alpha.size(); ++n) f[n] = coupling_f<Scalar>(n, alpha);
  return f;
}

/// g f_n alpha_n: the per-state rate multiplying x_n (1 - x_n^2).
template <typename Scalar>
Vector<Scalar> reduction_rates(const AlphaVector& alpha, const Vector<Scalar>& f, Scalar g) {
  if (f.size() != alpha.size()) throw WrongDimension("reduction_rates: size mismatch");
  return g * f.cwiseProduct(alpha.signs().template cast<Scalar>());
}

template <typename Scalar>
Vector<Scalar> reduction_rhs(const Vector<Scalar>& x, const AlphaVector& alpha,
                             const Vector<Scalar>& f, Scalar g) {
  if (x.size() != alpha.size()) throw WrongDimension("reduction_rhs: size mismatch");
  const Vector<Scalar> rates = reduction_rates(alpha, f, g);
  return rates.cwiseProduct(x).cwiseProduct(Vector<Scalar>::Ones(x.size()) - x.cwiseAbs2());
}

/// Full coupled dynamics written into `out` (no allocation when sized).
///
/// Stage values inside a Runge-Kutta step can dip below zero by roundoff, so
/// the product x_m x_n is clamped at zero before the square root.
template <typename Scalar>
void full_rhs_into(const Vector<Scalar>& x, const Vector<Scalar>& theta,
                   const BasicModelParams<Scalar>& params, BasicStateRate<Scalar>& out) {
  using std::cos;
  using std::sin;
  using std::sqrt;
  const Index n_states = x.size();
  out.theta_dot.resize(n_states);
  out.x_dot.resize(n_states);
  for (Index n = 0; n < n_states; ++n) {
    Scalar cos_sum = 0;
    Scalar sin_sum = 0;
    for (Index m = 0; m < n_states; ++m) {
      const Scalar h = params.h_matrix(n, m);
      if (h == Scalar(0)) continue;
      const Scalar amp = h * sqrt(std::max(Scalar(0), x[m] * x[n]));
      const Scalar dphi = theta[m] - theta[n];
      cos_sum += amp * cos(dphi);
      sin_sum += amp * sin(dphi);
    }
    out.theta_dot[n] = params.frozen_phase ? Scalar(0) : -params.omega[n] - cos_sum;
    out.x_dot[n] = sin_sum;
  }
}

template <typename Scalar>
BasicStateRate<Scalar> full_rhs(const BasicStateVector<Scalar>& state,
                                const BasicModelParams<Scalar>& params) {
  validate(params, state.size());
  BasicStateRate<Scalar> out;
  full_rhs_into(state.x, state.theta, params, out);
  return out;
}

/// Exponent lambda of the closed form under the chosen convention.
template <typename Scalar>
Scalar closed_form_rate(Scalar f, int alpha, Scalar g, RateConvention convention) {
  const Scalar base = g * f * Scalar(alpha);
  return convention == RateConvention::OdeConsistent ? Scalar(2) * base : base;
}

/// x(t) = 1 / sqrt(1 + ((1 - x0^2) / x0^2) exp(-lambda t)).
template <typename Scalar>
Scalar closed_form_x(Scalar t, Scalar x0, Scalar f, int alpha, Scalar g,
                     RateConvention convention) {
  using std::exp;
  using std::sqrt;
  if (!(x0 > Scalar(0) && x0 < Scalar(1))) {
    throw DegenerateInitial("closed_form_x: x0 must lie strictly inside (0, 1)");
  }
  const Scalar lambda = closed_form_rate(f, alpha, g, convention);
  const Scalar u0 = x0 * x0;
  return Scalar(1) / sqrt(Scalar(1) + ((Scalar(1) - u0) / u0) * exp(-lambda * t));
}

/// x_1 - x_2 for a two-state system.
template <typename Scalar>
Scalar q_value(const BasicStateVector<Scalar>& state) {
  if (state.size() != 2) {
    throw WrongDimension("q_value: requires exactly two states, got " +
                         std::to_string(state.size()));
  }
  return state.x[0] - state.x[1];
}

/// d/dt sum_n x_n.
template <typename Derived>
typename Derived::Scalar norm_drift(const Eigen::MatrixBase<Derived>& x_dot) {
  return x_dot.sum();
}

}  // namespace collapse
