#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "kforge/config.hpp"

namespace kforge {

/// Exit codes of the command-line front end.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  ///< a computation or a hard check failed
inline constexpr int kExitInput = 2;    ///< bad config, flags or polygon file

/// Rays, dual vertices, area, barycenter, symmetry order, soliton data and
/// the section counts N_r for r = 1..12.
int cmd_info(const RunConfig& config, std::ostream& out);

/// Runs one scheme; writes <out>/trace.csv, heatmaps <out>/sigma_step<k>.ppm
/// for the requested steps, weights when asked, and <out>/audit.csv for
/// ricci_outer.
int cmd_iterate(const RunConfig& config, std::ostream& log);

/// The four schemes at one rank; writes <out>/table.csv.
int cmd_table(const RunConfig& config, std::ostream& log);

/// Real Monge-Ampere iteration; writes <out>/real_trace.csv, potential.csv,
/// sigma.csv and, with cross_r > 0, cross_validation.csv.
int cmd_real_ma(const RunConfig& config, std::ostream& log);

/// Table rows in output order (scheme names accepted by parse_scheme).
[[nodiscard]] const std::vector<std::string>& table_schemes();

}  // namespace kforge
