#include "collapse/ensemble.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numbers>
#include <optional>
#include <thread>

namespace collapse {

std::mt19937_64 run_engine(std::uint64_t seed, std::uint64_t run_index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(run_index),
                    static_cast<std::uint32_t>(run_index >> 32)};
  return std::mt19937_64(seq);
}

namespace {

double draw_regular_phase(std::mt19937_64& engine, std::size_t& rejected) {
  for (int attempt = 0; attempt < kMaxPhaseAttempts; ++attempt) {
    const double theta = 2.0 * std::numbers::pi * unit_uniform(engine);
    if (std::abs(std::cos(theta)) > kSingularPhaseTolerance) return theta;
    ++rejected;
  }
  throw Error("phase sampler: too many singular draws, generator is broken");
}

}  // namespace

PhaseDraw sample_phases(const PhaseSampler& sampler, Index n_states, std::uint64_t run_index) {
  if (n_states < 1) throw WrongDimension("sample_phases: n_states must be positive");
  std::mt19937_64 engine = run_engine(sampler.seed, run_index);
  PhaseDraw draw;
  draw.theta.resize(n_states);
  if (sampler.mode == PhaseMode::Common) {
    draw.theta.setConstant(draw_regular_phase(engine, draw.rejected));
  } else {
    for (Index n = 0; n < n_states; ++n) draw.theta[n] = draw_regular_phase(engine, draw.rejected);
  }
  return draw;
}

Index outcome_slot(const OutcomeClass& outcome, Index n_states) {
  switch (outcome.kind()) {
    case OutcomeClass::Kind::CollapseTo: return outcome.index();
    case OutcomeClass::Kind::AllDecay: return n_states;
    case OutcomeClass::Kind::AllGrow: return n_states + 1;
    case OutcomeClass::Kind::Unresolved: return n_states + 2;
  }
  return n_states + 2;
}

OutcomeClass slot_outcome(Index slot, Index n_states) {
  if (slot < 0 || slot >= slot_count(n_states)) throw WrongDimension("slot_outcome: bad slot");
  if (slot < n_states) return OutcomeClass::collapse_to(slot);
  if (slot == n_states) return OutcomeClass::all_decay();
  if (slot == n_states + 1) return OutcomeClass::all_grow();
  return OutcomeClass::unresolved();
}

Eigen::VectorXd sign_config_oracle(Index n_states, PhaseMode mode) {
  if (n_states < 2) throw WrongDimension("sign_config_oracle: N must be at least 2");
  if (n_states > kMaxOracleStates) {
    throw DimensionTooLarge("sign_config_oracle: N = " + std::to_string(n_states) +
                            " exceeds " + std::to_string(kMaxOracleStates));
  }
  Eigen::VectorXd probs = Eigen::VectorXd::Zero(slot_count(n_states));
  auto add_config = [&](const SignVector& signs, double weight) {
    const AlphaVector alpha(signs);
    const Eigen::VectorXd rates = reduction_rates(alpha, coupling_vector<double>(alpha), 1.0);
    probs[outcome_slot(asymptotic_outcome(rates), n_states)] += weight;
  };

  if (mode == PhaseMode::Common) {
    add_config(SignVector::Constant(n_states, 1), 0.5);
    add_config(SignVector::Constant(n_states, -1), 0.5);
    return probs;
  }
  const std::uint64_t n_configs = std::uint64_t{1} << n_states;
  const double weight = 1.0 / static_cast<double>(n_configs);
  SignVector signs(n_states);
  for (std::uint64_t mask = 0; mask < n_configs; ++mask) {
    for (Index n = 0; n < n_states; ++n) signs[n] = (mask >> n) & 1U ? -1 : 1;
    add_config(signs, weight);
  }
  return probs;
}

ConfidenceInterval wilson_interval(std::int64_t successes, std::int64_t trials, double z) {
  if (trials <= 0) return {0.0, 1.0};
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

namespace {

struct RunRecord {
  std::int32_t slot = 0;
  double collapse_time = std::numeric_limits<double>::quiet_NaN();
  std::uint32_t rejected = 0;
};

}  // namespace

EnsembleReport run_ensemble(std::int64_t n_runs, const Eigen::VectorXd& x0,
                            const ModelParams& params, const IntegratorConfig& cfg,
                            const PhaseSampler& sampler, EnsembleOptions options) {
  if (n_runs < 1) throw ConfigError("ensemble: n_runs must be at least 1");
  const Index n_states = x0.size();
  if (n_states < 2) throw WrongDimension("ensemble: at least two states are required");
  for (Index n = 0; n < n_states; ++n) {
    if (!(x0[n] > 0.0 && x0[n] < 1.0)) {
      throw ConfigError("ensemble: x0[" + std::to_string(n) + "] must lie strictly inside (0, 1)");
    }
  }
  validate(params, n_states);
  if (!(params.g > 0.0)) throw ConfigError("params: g must be positive");
  cfg.validate();

  const auto start = std::chrono::steady_clock::now();
  std::vector<RunRecord> records(static_cast<std::size_t>(n_runs));

  std::atomic<std::int64_t> next{0};
  std::mutex failure_mutex;
  std::optional<std::uint64_t> failed_run;
  std::string failure_message;
  constexpr std::int64_t kChunk = 256;

  auto worker = [&] {
    StateVector initial{x0, Eigen::VectorXd::Zero(n_states)};
    while (true) {
      const std::int64_t begin = next.fetch_add(kChunk);
      if (begin >= n_runs) return;
      const std::int64_t end = std::min(n_runs, begin + kChunk);
      for (std::int64_t run = begin; run < end; ++run) {
        const auto index = static_cast<std::uint64_t>(run);
        try {
          PhaseDraw draw = sample_phases(sampler, n_states, index);
          initial.theta = draw.theta;
          const RunResult result = integrate_outcome(Law::Reduction, initial, params, cfg);
          RunRecord& rec = records[static_cast<std::size_t>(run)];
          rec.slot = static_cast<std::int32_t>(outcome_slot(result.outcome, n_states));
          if (result.collapse_time) rec.collapse_time = *result.collapse_time;
          rec.rejected = static_cast<std::uint32_t>(draw.rejected);
        } catch (const std::exception& e) {
          std::lock_guard lock(failure_mutex);
          if (!failed_run || index < *failed_run) {
            failed_run = index;
            failure_message = e.what();
          }
        }
      }
    }
  };

  unsigned threads = options.threads == 0 ? std::thread::hardware_concurrency() : options.threads;
  threads = std::max(1U, std::min<unsigned>(threads, static_cast<unsigned>(
                                                         (n_runs + kChunk - 1) / kChunk)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failed_run) throw EnsembleRunError(*failed_run, failure_message);

  EnsembleReport report;
  report.n_states = n_states;
  report.n_runs = n_runs;
  report.x0 = x0;
  report.sampler = sampler;
  report.params = params;
  report.cfg = cfg;

  const Index slots = slot_count(n_states);
  report.counts = CountVector::Zero(slots);
  Eigen::VectorXd time_sum = Eigen::VectorXd::Zero(slots);
  for (const RunRecord& rec : records) {
    ++report.counts[rec.slot];
    if (!std::isnan(rec.collapse_time)) time_sum[rec.slot] += rec.collapse_time;
    report.rejected_samples += rec.rejected;
  }

  report.frequencies = report.counts.cast<double>() / static_cast<double>(n_runs);
  report.collapse_time_mean = Eigen::VectorXd::Constant(slots, std::numeric_limits<double>::quiet_NaN());
  for (Index s = 0; s < n_states; ++s) {
    if (report.counts[s] > 0) report.collapse_time_mean[s] = time_sum[s] / static_cast<double>(report.counts[s]);
  }
  report.ci99.reserve(static_cast<std::size_t>(slots));
  for (Index s = 0; s < slots; ++s) report.ci99.push_back(wilson_interval(report.counts[s], n_runs, kZ99));
  report.oracle = sign_config_oracle(n_states, sampler.mode);

  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

double chi_square_p_value(double statistic, int degrees_of_freedom) {
  if (degrees_of_freedom < 1) throw ConfigError("chi-square: degrees of freedom must be >= 1");
  if (std::isinf(statistic)) return 0.0;
  if (statistic <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * degrees_of_freedom, 0.5 * statistic);
}

ChiSquareResult chi_square_test(const CountVector& counts, const Eigen::VectorXd& expected) {
  if (counts.size() != expected.size()) throw WrongDimension("chi-square: size mismatch");
  const double total = static_cast<double>(counts.sum());
  ChiSquareResult result;
  int classes = 0;
  for (Index i = 0; i < counts.size(); ++i) {
    const double observed = static_cast<double>(counts[i]);
    if (expected[i] <= 0.0) {
      if (observed > 0.0) result.statistic = std::numeric_limits<double>::infinity();
      continue;
    }
    const double e = expected[i] * total;
    if (e < 5.0) {
      throw LowExpectedCount("chi-square: expected count " + std::to_string(e) +
                             " in class " + std::to_string(i) + " is below 5");
    }
    ++classes;
    result.statistic += (observed - e) * (observed - e) / e;
  }
  result.degrees_of_freedom = classes - 1;
  if (result.degrees_of_freedom < 1) {
    result.p_value = std::isinf(result.statistic) ? 0.0 : 1.0;
  } else {
    result.p_value = chi_square_p_value(result.statistic, result.degrees_of_freedom);
  }
  return result;
}

ChiSquareResult chi_square_test(const EnsembleReport& report) {
  return chi_square_test(report.counts, report.oracle);
}

ChiSquareResult chi_square_homogeneity(const CountVector& a, const CountVector& b) {
  if (a.size() != b.size()) throw WrongDimension("chi-square: size mismatch");
  const double total_a = static_cast<double>(a.sum());
  const double total_b = static_cast<double>(b.sum());
  const double total = total_a + total_b;
  ChiSquareResult result;
  int classes = 0;
  for (Index i = 0; i < a.size(); ++i) {
    const double column = static_cast<double>(a[i] + b[i]);
    if (column == 0.0) continue;
    const double ea = total_a * column / total;
    const double eb = total_b * column / total;
    if (ea < 5.0 || eb < 5.0) {
      throw LowExpectedCount("chi-square: expected count below 5 in class " + std::to_string(i));
    }
    ++classes;
    const double da = static_cast<double>(a[i]) - ea;
    const double db = static_cast<double>(b[i]) - eb;
    result.statistic += da * da / ea + db * db / eb;
  }
  result.degrees_of_freedom = classes - 1;
  result.p_value = result.degrees_of_freedom < 1
                       ? 1.0
                       : chi_square_p_value(result.statistic, result.degrees_of_freedom);
  return result;
}

}  // namespace collapse
