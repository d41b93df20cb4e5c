#pragma once

#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "kforge/iteration.hpp"
#include "kforge/real_ma.hpp"

namespace kforge {

/// Bad config text or out-of-range value; line is 0 for flag overrides.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& what, int line) : std::runtime_error(what), line_(line) {}
  [[nodiscard]] int line() const { return line_; }

 private:
  int line_;
};

/**
 * Run parameters shared by the command-line subcommands. Grid parameters are
 * optional because their defaults depend on the command: the sample cloud for
 * iterate/table, the finite-difference grid for real-ma.
 */
struct RunConfig {
  std::string polygon;
  Scheme scheme = Scheme::canonical;
  int rank = 4;
  /// Iteration budget; for real-ma the number of outer steps.
  std::optional<int> iterations;
  std::optional<double> grid_resolution;
  std::optional<double> grid_radius;
  std::optional<double> tolerance;
  std::string out = ".";
  int threads = 0;
  bool dump_weights = false;
  std::vector<int> heatmap_at;
  int heatmap_size = 512;

  InitMode init = InitMode::uniform;
  double stats_window = 10.0;
  double refinement_gain = -1.0;
  int inner_iterations = 30;
  bool timing = true;

  double eps = 0.0;
  BoundaryMode boundary = BoundaryMode::neumann;
  /// real-ma: rank of the canonical metric to cross-validate against, 0 = off.
  int cross_rank = 0;
  int cross_iterations = 40;
  int dump_stride = 1;

  /// Throws ConfigError (line 0) on out-of-range values.
  void validate() const;
};

/// Keys accepted by set_config_value, in documentation order.
[[nodiscard]] const std::vector<std::string>& config_keys();

/// Assigns one key; throws ConfigError with the given line on bad input.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value, int line = 0);

/// `key = value` lines; '#' starts a comment; blank lines are ignored.
/// Relative polygon paths are resolved against `base_dir` when it is non-empty.
void parse_config(std::istream& in, RunConfig& config, const std::string& base_dir = {});
void read_config_file(const std::string& path, RunConfig& config);

/// Writes every key with its current value (round-trips through parse_config).
void write_config(std::ostream& out, const RunConfig& config);

/// "10,16,20" -> {10, 16, 20}; throws std::invalid_argument.
[[nodiscard]] std::vector<int> parse_int_list(const std::string& text);

}  // namespace kforge
