#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kforge/energy.hpp"
#include "kforge/field.hpp"

namespace kforge {

enum class Scheme { balanced, canonical, ricci_outer, refined_balanced, refined_canonical };

[[nodiscard]] std::string to_string(Scheme s);
/// Accepts the names above; throws std::invalid_argument otherwise.
[[nodiscard]] Scheme parse_scheme(const std::string& name);

enum class InitMode {
  uniform,       ///< b = 1 on every section
  reference_l2,  ///< b_m proportional to int exp(<m,x> - (r+1) w0) dx
};

[[nodiscard]] std::string to_string(InitMode m);
[[nodiscard]] InitMode parse_init(const std::string& name);

struct IterationConfig {
  Scheme scheme = Scheme::canonical;
  int rank = 4;
  int max_iterations = 15;
  /// ricci_outer only.
  int inner_iterations = 30;
  double inner_tolerance = 1e-9;
  /// Stop when the relative sup-norm change of the orbit weights drops below this.
  double tolerance = 1e-8;
  InitMode init = InitMode::uniform;
  /// Refined schemes: number of rank increments, starting at rank - rungs.
  int refinement_rungs = 1;
  /// Coefficient g in the target N_{r+1} + g r (1 - sigma_r); negative means Area(Delta).
  double refinement_gain = -1.0;
  /// Curvature statistics use cloud points with support value <= window.
  double stats_window = 10.0;
  double condition_bound = kDefaultConditionBound;
  /// Allowed relative defect of the moment-map volume at every step.
  double volume_tolerance = 5e-3;
  bool record_functionals = true;
  bool timing = true;
  int threads = 0;

  void validate() const;
};

struct IterationStep {
  int step = 0;
  MetricWeights weights;
  double residual = 0.0;
  SigmaStats sigma;
  double volume = 0.0;
  FunctionalValues functionals;
  double wall_ms = 0.0;
};

struct IterationTrace {
  Scheme scheme = Scheme::canonical;
  int rank = 0;
  std::vector<IterationStep> steps;
  bool converged = false;
  bool budget_exhausted = false;
  std::vector<std::string> warnings;

  [[nodiscard]] const IterationStep& last() const { return steps.back(); }
};

/// Uniform rescale so that the geometric mean of the per-point weights is 1.
[[nodiscard]] MetricWeights normalize(const MetricWeights& weights);

/// Relative sup-norm distance max_o |a_o - b_o| / max_o |b_o|.
[[nodiscard]] double weight_residual(const MetricWeights& next, const MetricWeights& prev);

/// b'_m = (N_r / V) int e^{<m,x>} / rho_b(x) nu(x) dx, orbit-checked and normalized.
[[nodiscard]] MetricWeights t_nu_step(const MetricWeights& weights, const SampleCloud& cloud, std::span<const double> nu,
                                      double area, int threads = 0);

/// b'_m = int e^{<m,x>} rho_b^{-(1+1/r)} tau dx (tau = 1 unless a target is given), normalized.
[[nodiscard]] MetricWeights t_canonical_step(const MetricWeights& weights, const SampleCloud& cloud,
                                             std::span<const double> target = {}, int threads = 0);

/// Per-point target for rank r+1 from the rank-r curvature:
///     tau ~ N_{r+1} + gain r (1 - sigma),
/// scaled so that (1/V) int tau det H_r dx = N_{r+1}. Flagged points use sigma = 1.
[[nodiscard]] std::vector<double> refined_target(const MetricField& field_r, int rank_r, std::size_t n_next,
                                                 const SampleCloud& cloud, double area, double gain);

/// Starting weights for the configured init mode.
[[nodiscard]] MetricWeights initial_weights(const FanoPolygon& polygon, std::shared_ptr<const SectionBasis> basis,
                                            InitMode init, const SampleCloud& cloud);

using StepCallback = std::function<void(const IterationStep&)>;

/// Outer/inner Ricci-balanced scheme.
[[nodiscard]] IterationTrace ricci_outer_scheme(const MetricWeights& weights0, const FanoPolygon& polygon,
                                                const SampleCloud& cloud, const IterationConfig& config,
                                                const StepCallback& on_step = {});

/// Runs the configured scheme from the configured initial weights.
[[nodiscard]] IterationTrace run_iteration(const IterationConfig& config, const FanoPolygon& polygon,
                                           const SampleCloud& cloud, const StepCallback& on_step = {});

/// Same as run_iteration but starting from explicit weights (non-refined schemes).
[[nodiscard]] IterationTrace run_iteration_from(const MetricWeights& weights0, const IterationConfig& config,
                                                const FanoPolygon& polygon, const SampleCloud& cloud,
                                                const StepCallback& on_step = {},
                                                std::span<const double> target = {});

inline constexpr const char* kTraceHeader = "step,residual,sigma_avg,sigma_min,sigma_max,I,J,F1,E0,wall_ms";

void write_trace_header(std::ostream& out);
void write_trace_row(std::ostream& out, const IterationStep& step);
void write_trace_csv(std::ostream& out, const IterationTrace& trace);

}  // namespace kforge
