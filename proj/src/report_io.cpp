#include "collapse/report_io.hpp"

#include <charconv>
#include <cmath>
#include <ostream>

namespace collapse {

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

std::string to_string(PhaseMode mode) {
  return mode == PhaseMode::Common ? "common" : "independent";
}

std::string to_string(RateConvention convention) {
  return convention == RateConvention::AsPrinted ? "as-printed" : "ode-consistent";
}

std::string to_string(Law law) { return law == Law::Full ? "full" : "reduction"; }

void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory) {
  if (trajectory.states.empty()) return;
  const Index n = trajectory.states.front().size();
  const bool with_q = !trajectory.q_series.empty();
  out << 't';
  for (Index i = 1; i <= n; ++i) out << ",x_" << i;
  for (Index i = 1; i <= n; ++i) out << ",theta_" << i;
  if (with_q) out << ",q";
  out << ",norm\n";
  for (std::size_t row = 0; row < trajectory.size(); ++row) {
    const StateVector& s = trajectory.states[row];
    out << format_double(trajectory.times[row]);
    for (Index i = 0; i < n; ++i) out << ',' << format_double(s.x[i]);
    for (Index i = 0; i < n; ++i) out << ',' << format_double(s.theta[i]);
    if (with_q) out << ',' << format_double(trajectory.q_series[row]);
    out << ',' << format_double(trajectory.norm_series[row]) << '\n';
  }
}

namespace {

nlohmann::ordered_json to_array(const Eigen::VectorXd& v) {
  auto arr = nlohmann::ordered_json::array();
  for (Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
  return arr;
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

nlohmann::ordered_json report_to_json(const EnsembleReport& report) {
  using json = nlohmann::ordered_json;
  const Index slots = slot_count(report.n_states);
  json counts = json::object();
  json frequencies = json::object();
  json ci99 = json::object();
  json oracle = json::object();
  json tau = json::object();
  for (Index s = 0; s < slots; ++s) {
    const std::string label = slot_outcome(s, report.n_states).label();
    counts[label] = report.counts[s];
    frequencies[label] = report.frequencies[s];
    const ConfidenceInterval& ci = report.ci99[static_cast<std::size_t>(s)];
    ci99[label] = json::array({ci.lower, ci.upper});
    oracle[label] = report.oracle[s];
    tau[label] = number_or_null(report.collapse_time_mean[s]);
  }

  Eigen::VectorXd h_flat(report.params.h_matrix.size());
  for (Index r = 0; r < report.params.h_matrix.rows(); ++r) {
    for (Index c = 0; c < report.params.h_matrix.cols(); ++c) {
      h_flat[r * report.params.h_matrix.cols() + c] = report.params.h_matrix(r, c);
    }
  }

  json doc = json::object();
  doc["n_runs"] = report.n_runs;
  doc["n_states"] = report.n_states;
  doc["counts"] = counts;
  doc["frequencies"] = frequencies;
  doc["ci99"] = ci99;
  doc["oracle"] = oracle;
  doc["collapse_time_mean"] = tau;
  doc["seed"] = report.sampler.seed;
  doc["phase_mode"] = to_string(report.sampler.mode);
  doc["distribution"] = "uniform-circle";
  doc["x0"] = to_array(report.x0);
  doc["params"] = {
      {"law", to_string(Law::Reduction)},
      {"g", report.params.g},
      {"omega", to_array(report.params.omega)},
      {"h_matrix", to_array(h_flat)},
      {"rate_convention", to_string(report.params.rate_convention)},
      {"frozen_phase", report.params.frozen_phase},
  };
  doc["cfg"] = {
      {"dt", report.cfg.dt},
      {"t_max", report.cfg.t_max},
      {"epsilon", report.cfg.epsilon},
      {"sample_stride", report.cfg.sample_stride},
  };
  doc["rejected_samples"] = report.rejected_samples;
  doc["wall_time"] = report.wall_time;
  return doc;
}

}  // namespace collapse
