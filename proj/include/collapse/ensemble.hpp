#pragma once

// Monte Carlo ensembles over random initial phases.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "collapse/integrator.hpp"
#include "collapse/model.hpp"

namespace collapse {

enum class PhaseDistribution { UniformCircle };

struct PhaseSampler {
  PhaseMode mode = PhaseMode::Independent;
  PhaseDistribution distribution = PhaseDistribution::UniformCircle;
  std::uint64_t seed = 1;
};

struct PhaseDraw {
  Eigen::VectorXd theta;
  std::size_t rejected = 0;  // draws discarded for |cos theta| <= 1e-12
};

/// Maximum consecutive rejections before the generator is declared broken.
inline constexpr int kMaxPhaseAttempts = 1000;

/// Generator for one run, seeded from (seed, run_index) only.
std::mt19937_64 run_engine(std::uint64_t seed, std::uint64_t run_index);

/// Uniform double on [0, 1) from the top 53 bits of one engine draw.
inline double unit_uniform(std::mt19937_64& engine) {
  return static_cast<double>(engine() >> 11) * 0x1.0p-53;
}

PhaseDraw sample_phases(const PhaseSampler& sampler, Index n_states, std::uint64_t run_index);

// Outcome classes for an N-state system are laid out in fixed slots:
// CollapseTo(0..N-1), AllDecay, AllGrow, Unresolved.
inline Index slot_count(Index n_states) { return n_states + 3; }
Index outcome_slot(const OutcomeClass& outcome, Index n_states);
OutcomeClass slot_outcome(Index slot, Index n_states);

/// Largest N the sign enumeration accepts (2^N configurations).
inline constexpr Index kMaxOracleStates = 20;

/// Exact outcome probabilities from enumerating the 2^N alpha configurations,
/// each weighted by its phase measure, and classifying the signs of f_n alpha_n.
Eigen::VectorXd sign_config_oracle(Index n_states, PhaseMode mode);

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Two-sided z for 99% coverage.
inline constexpr double kZ99 = 2.5758293035489004;

/// Wilson score interval for a binomial proportion.
ConfidenceInterval wilson_interval(std::int64_t successes, std::int64_t trials, double z);

using CountVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

struct EnsembleReport {
  Index n_states = 0;
  std::int64_t n_runs = 0;
  CountVector counts;                // per slot
  Eigen::VectorXd frequencies;       // per slot
  std::vector<ConfidenceInterval> ci99;
  Eigen::VectorXd oracle;            // per slot
  Eigen::VectorXd collapse_time_mean;  // per slot, NaN when the slot is empty or never collapses
  Eigen::VectorXd x0;
  PhaseSampler sampler;
  ModelParams params;
  IntegratorConfig cfg;
  std::size_t rejected_samples = 0;
  double wall_time = 0.0;

  std::int64_t count(const OutcomeClass& outcome) const {
    return counts[outcome_slot(outcome, n_states)];
  }
  std::int64_t collapse_count() const { return counts.head(n_states).sum(); }
};

/// Integration failure inside an ensemble, tagged with the failing run.
class EnsembleRunError : public Error {
 public:
  EnsembleRunError(std::uint64_t run_index, const std::string& what)
      : Error("run " + std::to_string(run_index) + ": " + what), run_index_(run_index) {}
  std::uint64_t run_index() const noexcept { return run_index_; }

 private:
  std::uint64_t run_index_;
};

struct EnsembleOptions {
  unsigned threads = 0;  // 0 = hardware concurrency
};

/// Run n_runs reduction trajectories from x0 with sampled phases. The result
/// does not depend on thread count or scheduling.
EnsembleReport run_ensemble(std::int64_t n_runs, const Eigen::VectorXd& x0,
                            const ModelParams& params, const IntegratorConfig& cfg,
                            const PhaseSampler& sampler, EnsembleOptions options = {});

struct ChiSquareResult {
  double statistic = 0.0;
  double p_value = 1.0;
  int degrees_of_freedom = 0;
};

/// Upper tail of the chi-square distribution.
double chi_square_p_value(double statistic, int degrees_of_freedom);

/// Pearson goodness of fit of the report's counts against its oracle.
ChiSquareResult chi_square_test(const EnsembleReport& report);

/// Pearson goodness of fit of raw counts against class probabilities.
ChiSquareResult chi_square_test(const CountVector& counts, const Eigen::VectorXd& expected);

/// Pearson homogeneity test of two count vectors over the same classes.
ChiSquareResult chi_square_homogeneity(const CountVector& a, const CountVector& b);

}  // namespace collapse
