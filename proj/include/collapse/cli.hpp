#pragma once

// Command-line front end: trajectory, ensemble, sweep, verify.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "collapse/ensemble.hpp"
#include "collapse/integrator.hpp"
#include "collapse/model.hpp"

namespace collapse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitVerifyFailed = 3;

/// Everything a subcommand needs, after merging the config file and flags.
struct RunConfig {
  Eigen::VectorXd x0;
  std::optional<Eigen::VectorXd> theta0;
  ModelParams params;
  IntegratorConfig cfg;
  std::optional<PhaseSampler> sampler;
  Law law = Law::Reduction;
  std::int64_t runs = 1000;
  std::string out;
  unsigned threads = 0;
  std::vector<double> sweep_g;
  std::vector<double> sweep_epsilon;
  bool dt_explicit = false;
  bool t_max_explicit = false;
  /// trajectory only: stop at the first detected outcome rather than t_max.
  bool stop_at_collapse = false;

  Index n_states() const { return x0.size(); }
};

/// Parses a number or a multiple of pi: "1.5", "pi", "-pi/2", "3*pi/4".
double parse_scalar(const std::string& token, const std::string& field);

/// Mean collapse time predicted from the closed form, weighting each
/// collapse target by its observed share of the report's collapses.
/// NaN when no run collapsed.
double analytic_collapse_time(const EnsembleReport& report);

/// Mean detected collapse time over all collapsed runs; NaN when none.
double mean_collapse_time(const EnsembleReport& report);

int cmd_trajectory(const RunConfig& config, std::ostream& out);
int cmd_ensemble(const RunConfig& config, std::ostream& out);
int cmd_sweep(const RunConfig& config, std::ostream& out);
int cmd_verify(std::ostream& out);

/// Full entry point: parses arguments, dispatches and maps errors to exit codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace collapse::cli
