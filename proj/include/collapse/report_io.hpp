#pragma once

#include <iosfwd>
#include <string>

#include "json.hpp"

#include "collapse/ensemble.hpp"
#include "collapse/integrator.hpp"

namespace collapse {

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);

std::string to_string(PhaseMode mode);
std::string to_string(RateConvention convention);
std::string to_string(Law law);

/// Header `t,x_1..x_N,theta_1..theta_N[,q],norm` and one row per sample.
void write_trajectory_csv(std::ostream& out, const Trajectory& trajectory);

/// Self-describing ensemble report with stable field names.
nlohmann::ordered_json report_to_json(const EnsembleReport& report);

}  // namespace collapse
