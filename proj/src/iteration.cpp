#include "kforge/iteration.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "kforge/parallel.hpp"

namespace kforge {

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::balanced: return "balanced";
    case Scheme::canonical: return "canonical";
    case Scheme::ricci_outer: return "ricci_outer";
    case Scheme::refined_balanced: return "refined_balanced";
    case Scheme::refined_canonical: return "refined_canonical";
  }
  return "unknown";
}

Scheme parse_scheme(const std::string& name) {
  for (Scheme s : {Scheme::balanced, Scheme::canonical, Scheme::ricci_outer, Scheme::refined_balanced,
                   Scheme::refined_canonical}) {
    if (to_string(s) == name) return s;
  }
  throw std::invalid_argument("unknown scheme '" + name +
                              "' (expected balanced, canonical, ricci_outer, refined_balanced, refined_canonical)");
}

std::string to_string(InitMode m) { return m == InitMode::uniform ? "uniform" : "reference_l2"; }

InitMode parse_init(const std::string& name) {
  if (name == "uniform") return InitMode::uniform;
  if (name == "reference_l2") return InitMode::reference_l2;
  throw std::invalid_argument("unknown init mode '" + name + "' (expected uniform or reference_l2)");
}

void IterationConfig::validate() const {
  if (rank < 1) throw std::invalid_argument("rank must be >= 1");
  if (max_iterations < 0) throw std::invalid_argument("iteration budget must be >= 0");
  if (inner_iterations < 1) throw std::invalid_argument("inner iteration count must be >= 1");
  if (!(tolerance >= 0.0) || !(inner_tolerance >= 0.0)) throw std::invalid_argument("tolerances must be >= 0");
  if (refinement_rungs < 1) throw std::invalid_argument("refinement rungs must be >= 1");
  if ((scheme == Scheme::refined_balanced || scheme == Scheme::refined_canonical) && rank - refinement_rungs < 1) {
    throw std::invalid_argument("refined schemes need rank - rungs >= 1");
  }
}

MetricWeights normalize(const MetricWeights& weights) {
  weights.validate();
  const auto& basis = *weights.basis;
  std::vector<double> logs(basis.size());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = std::log(weights.b[basis.orbit_of[i]]);
  const double mean = pairwise_sum(logs) / static_cast<double>(logs.size());
  MetricWeights out = weights;
  for (double& b : out.b) b = std::exp(std::log(b) - mean);
  return out;
}

double weight_residual(const MetricWeights& next, const MetricWeights& prev) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t o = 0; o < prev.b.size(); ++o) {
    diff = std::max(diff, std::abs(next.b[o] - prev.b[o]));
    scale = std::max(scale, std::abs(prev.b[o]));
  }
  return diff / scale;
}

namespace {

using Clock = std::chrono::steady_clock;

// Orbit members must integrate to the same value; the check guards the
// symmetry of the cloud and of the density.
MetricWeights orbit_reduce(const std::vector<double>& per_point, const MetricWeights& like) {
  const auto& basis = *like.basis;
  MetricWeights out = like;
  for (std::size_t o = 0; o < basis.orbit_count(); ++o) {
    const auto& members = basis.orbits[o];
    double lo = per_point[members[0]], hi = lo, sum = 0.0;
    for (std::size_t i : members) {
      lo = std::min(lo, per_point[i]);
      hi = std::max(hi, per_point[i]);
      sum += per_point[i];
    }
    if (!(lo > 0.0)) throw std::domain_error("section integral is not positive for orbit " + std::to_string(o));
    if ((hi - lo) > 1e-9 * hi) {
      throw std::logic_error("orbit integrals differ by " + std::to_string((hi - lo) / hi) + " for orbit " +
                             std::to_string(o) + "; cloud or density is not symmetric");
    }
    out.b[o] = sum / static_cast<double>(members.size());
  }
  return out;
}

void check_density(std::span<const double> nu) {
  double mass = 0.0;
  for (double v : nu) {
    if (!std::isfinite(v)) throw std::domain_error("non-finite density value");
    if (v < 0.0) throw std::domain_error("negative density value");
    mass += v;
  }
  if (!(mass > 0.0)) throw std::domain_error("density has zero mass on the cloud");
}

}  // namespace

MetricWeights t_nu_step(const MetricWeights& weights, const SampleCloud& cloud, std::span<const double> nu,
                        double area, int threads) {
  check_density(nu);
  auto integrals = section_integrals(weights, cloud, nu, threads);
  const double scale = static_cast<double>(weights.basis->size()) / area;
  for (double& v : integrals) v *= scale;
  return normalize(orbit_reduce(integrals, weights));
}

MetricWeights t_canonical_step(const MetricWeights& weights, const SampleCloud& cloud, std::span<const double> target,
                               int threads) {
  if (!target.empty() && target.size() != cloud.size()) throw std::invalid_argument("target does not match the cloud");
  FieldOptions opts;
  opts.curvature = false;
  opts.threads = threads;
  const MetricField field = evaluate_metric_field(weights, cloud, opts);
  std::vector<double> nu(cloud.size());
  for (std::size_t k = 0; k < nu.size(); ++k) nu[k] = std::exp(-field.u[k]) * (target.empty() ? 1.0 : target[k]);
  check_density(nu);
  return normalize(orbit_reduce(section_integrals(weights, cloud, nu, threads), weights));
}

std::vector<double> refined_target(const MetricField& field_r, int rank_r, std::size_t n_next, const SampleCloud& cloud,
                                   double area, double gain) {
  if (field_r.sigma.size() != cloud.size()) throw std::invalid_argument("refined target needs curvature data");
  const double n = static_cast<double>(n_next);
  std::vector<double> tau(cloud.size());
  for (std::size_t k = 0; k < tau.size(); ++k) {
    double s = field_r.sigma[k];
    if (field_r.ill_conditioned[k] || !std::isfinite(s)) s = 1.0;
    if (s < -10.0 || s > 10.0) {
      throw std::domain_error("rank-" + std::to_string(rank_r) + " curvature " + std::to_string(s) +
                              " is outside [-10, 10]; the input metric is not converged");
    }
    tau[k] = n + gain * rank_r * (1.0 - s);
  }
  std::vector<double> mass(tau.size());
  for (std::size_t k = 0; k < tau.size(); ++k) mass[k] = tau[k] * field_r.det_h[k];
  const double scale = n / (cloud_sum(mass, cloud) / area);
  for (double& t : tau) {
    t *= scale;
    if (!(t > 0.0)) throw std::domain_error("refined target is not positive; lower the refinement gain");
  }
  return tau;
}

MetricWeights initial_weights(const FanoPolygon& polygon, std::shared_ptr<const SectionBasis> basis, InitMode init,
                              const SampleCloud& cloud) {
  MetricWeights w = MetricWeights::uniform(basis);
  if (init == InitMode::uniform) return w;

  const double r = basis->rank;
  std::vector<double> w0(cloud.size());
  for (std::size_t k = 0; k < cloud.size(); ++k) w0[k] = reference_potential(polygon, cloud.points[k]).value;
  std::vector<double> per_point(basis->size());
  std::vector<double> f(cloud.size());
  for (std::size_t i = 0; i < basis->size(); ++i) {
    const Vec2 m = basis->points[i].to_real();
    for (std::size_t k = 0; k < cloud.size(); ++k) f[k] = std::exp(m.dot(cloud.points[k]) - (r + 1.0) * w0[k]);
    per_point[i] = cloud_sum(f, cloud);
  }
  return normalize(orbit_reduce(per_point, w));
}

namespace {

struct Recorder {
  const IterationConfig& config;
  const FanoPolygon& polygon;
  const SampleCloud& cloud;
  IterationTrace& trace;
  const StepCallback& on_step;
  std::optional<MetricField> ref;
  std::vector<double> h_ref;

  // Evaluates, checks and records a step; returns the field for reuse.
  MetricField record(int step, const MetricWeights& w, double residual, Clock::time_point started) {
    FieldOptions opts;
    opts.curvature = true;
    opts.condition_bound = config.condition_bound;
    opts.threads = config.threads;
    MetricField field = evaluate_metric_field(w, cloud, opts);

    IterationStep s;
    s.step = step;
    s.weights = w;
    s.residual = residual;
    s.sigma = sigma_statistics(field, cloud, config.stats_window);
    s.volume = field_volume(field, cloud);
    const double defect = std::abs(s.volume - polygon.area()) / polygon.area();
    if (defect > config.volume_tolerance) {
      throw std::runtime_error("moment-map volume identity violated at step " + std::to_string(step) + ": volume " +
                               std::to_string(s.volume) + " vs area " + std::to_string(polygon.area()));
    }
    if (config.record_functionals) {
      if (!ref) {
        ref = field;
        h_ref = ricci_deviation_of(field, cloud, polygon.area());
      }
      s.functionals = evaluate_functionals(*ref, field, cloud, polygon.area(), h_ref);
    }
    if (config.timing) {
      s.wall_ms = std::chrono::duration<double, std::milli>(Clock::now() - started).count();
    }
    trace.steps.push_back(s);
    if (on_step) on_step(trace.steps.back());
    return field;
  }
};

}  // namespace

IterationTrace run_iteration_from(const MetricWeights& weights0, const IterationConfig& config,
                                  const FanoPolygon& polygon, const SampleCloud& cloud, const StepCallback& on_step,
                                  std::span<const double> target) {
  config.validate();
  weights0.validate();
  if (config.scheme == Scheme::ricci_outer) return ricci_outer_scheme(weights0, polygon, cloud, config, on_step);

  const bool balanced = config.scheme == Scheme::balanced || config.scheme == Scheme::refined_balanced;
  if (!target.empty() && target.size() != cloud.size()) throw std::invalid_argument("target does not match the cloud");

  IterationTrace trace;
  trace.scheme = config.scheme;
  trace.rank = weights0.rank();
  Recorder rec{config, polygon, cloud, trace, on_step, std::nullopt, {}};

  auto started = Clock::now();
  MetricWeights current = normalize(weights0);
  MetricField field = rec.record(0, current, 0.0, started);

  for (int step = 1; step <= config.max_iterations; ++step) {
    started = Clock::now();
    MetricWeights next;
    if (balanced) {
      std::vector<double> nu(field.det_h);
      if (!target.empty()) {
        for (std::size_t k = 0; k < nu.size(); ++k) nu[k] *= target[k];
      }
      next = t_nu_step(current, cloud, nu, polygon.area(), config.threads);
    } else {
      std::vector<double> nu(cloud.size());
      for (std::size_t k = 0; k < nu.size(); ++k) nu[k] = std::exp(-field.u[k]) * (target.empty() ? 1.0 : target[k]);
      check_density(nu);
      next = normalize(orbit_reduce(section_integrals(current, cloud, nu, config.threads), current));
    }
    const double residual = weight_residual(next, current);
    current = std::move(next);
    field = rec.record(step, current, residual, started);
    if (residual < config.tolerance) {
      trace.converged = true;
      break;
    }
  }
  trace.budget_exhausted = !trace.converged;
  return trace;
}

IterationTrace ricci_outer_scheme(const MetricWeights& weights0, const FanoPolygon& polygon, const SampleCloud& cloud,
                                  const IterationConfig& config, const StepCallback& on_step) {
  config.validate();
  IterationTrace trace;
  trace.scheme = Scheme::ricci_outer;
  trace.rank = weights0.rank();
  Recorder rec{config, polygon, cloud, trace, on_step, std::nullopt, {}};

  auto started = Clock::now();
  MetricWeights current = normalize(weights0);
  MetricField field = rec.record(0, current, 0.0, started);

  for (int step = 1; step <= config.max_iterations; ++step) {
    started = Clock::now();
    // Freeze rho_{k-1}^{-1/r} = e^{-u_{k-1}}.
    std::vector<double> nu(cloud.size());
    for (std::size_t k = 0; k < nu.size(); ++k) nu[k] = std::exp(-field.u[k]);
    check_density(nu);

    MetricWeights inner = current;
    bool inner_done = false;
    double inner_residual = 0.0;
    for (int it = 0; it < config.inner_iterations; ++it) {
      MetricWeights next = t_nu_step(inner, cloud, nu, polygon.area(), config.threads);
      inner_residual = weight_residual(next, inner);
      inner = std::move(next);
      if (inner_residual < config.inner_tolerance) {
        inner_done = true;
        break;
      }
    }
    if (!inner_done && config.inner_iterations > 1) {
      trace.warnings.push_back("outer step " + std::to_string(step) + ": inner loop stopped at residual " +
                               std::to_string(inner_residual) + " after " + std::to_string(config.inner_iterations) +
                               " iterations");
    }
    const double residual = weight_residual(inner, current);
    current = std::move(inner);
    field = rec.record(step, current, residual, started);
    if (residual < config.tolerance) {
      trace.converged = true;
      break;
    }
  }
  trace.budget_exhausted = !trace.converged;
  return trace;
}

IterationTrace run_iteration(const IterationConfig& config, const FanoPolygon& polygon, const SampleCloud& cloud,
                             const StepCallback& on_step) {
  config.validate();
  const bool refined = config.scheme == Scheme::refined_balanced || config.scheme == Scheme::refined_canonical;
  if (!refined) {
    auto basis = std::make_shared<const SectionBasis>(enumerate_sections(polygon, config.rank));
    return run_iteration_from(initial_weights(polygon, basis, config.init, cloud), config, polygon, cloud, on_step);
  }

  const double gain = config.refinement_gain < 0.0 ? polygon.area() : config.refinement_gain;
  IterationConfig base = config;
  base.scheme = config.scheme == Scheme::refined_balanced ? Scheme::balanced : Scheme::canonical;
  base.record_functionals = false;
  int q = config.rank - config.refinement_rungs;
  auto basis = std::make_shared<const SectionBasis>(enumerate_sections(polygon, q));
  IterationTrace lower = run_iteration_from(initial_weights(polygon, basis, config.init, cloud), base, polygon, cloud);
  const std::vector<std::string> warnings = lower.warnings;

  FieldOptions opts;
  opts.condition_bound = config.condition_bound;
  opts.threads = config.threads;
  MetricField field = evaluate_metric_field(lower.last().weights, cloud, opts);
  for (++q; q <= config.rank; ++q) {
    auto next_basis = std::make_shared<const SectionBasis>(enumerate_sections(polygon, q));
    const auto tau = refined_target(field, q - 1, next_basis->size(), cloud, polygon.area(), gain);
    IterationConfig rung = config;
    if (q < config.rank) rung.record_functionals = false;
    IterationTrace t = run_iteration_from(initial_weights(polygon, next_basis, config.init, cloud), rung, polygon,
                                          cloud, q == config.rank ? on_step : StepCallback{}, tau);
    if (q == config.rank) {
      t.scheme = config.scheme;
      t.warnings.insert(t.warnings.begin(), warnings.begin(), warnings.end());
      return t;
    }
    field = evaluate_metric_field(t.last().weights, cloud, opts);
  }
  throw std::logic_error("unreachable");
}

void write_trace_header(std::ostream& out) { out << kTraceHeader << '\n'; }

void write_trace_row(std::ostream& out, const IterationStep& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.10e,%.10f,%.10f,%.10f,%.10e,%.10e,%.10e,%.10e,%.3f\n", s.step, s.residual,
                s.sigma.avg, s.sigma.min, s.sigma.max, s.functionals.I, s.functionals.J, s.functionals.F1,
                s.functionals.E0, s.wall_ms);
  out << buf;
}

void write_trace_csv(std::ostream& out, const IterationTrace& trace) {
  write_trace_header(out);
  for (const auto& s : trace.steps) write_trace_row(out, s);
}

}  // namespace kforge
